// Acceptance suite: one PASS / FAIL / SKIP line per criterion. Exit status is
// non-zero iff a criterion fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "docie/config.hpp"
#include "docie/coref.hpp"
#include "docie/harness.hpp"
#include "docie/interaction.hpp"
#include "docie/metrics.hpp"
#include "docie/model.hpp"
#include "docie/relation.hpp"
#include "docie/synthetic.hpp"
#include "metric_fixtures.hpp"
#include "support.hpp"

using namespace docie;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kOracleTol = 1e-5;
constexpr int kOracleInstances = 100;
constexpr double kOracleSeconds = 60.0;
constexpr double kGradTol = 1e-4;
constexpr int kGradInstances = 10;
constexpr std::size_t kTransferDocs = 50;
constexpr double kMetricTol = 1e-12;
constexpr double kOverfitF1 = 0.95;
constexpr double kOverfitSeconds = 600.0;
constexpr double kStatTol = 0.5;

enum class Verdict { kPass, kFail, kSkip };

struct Outcome {
  Verdict verdict;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

Outcome verdict(bool ok, const std::string& detail) {
  return {ok ? Verdict::kPass : Verdict::kFail, detail};
}

harness::SettingConfig toy_config() {
  return harness::load_config(fs::path(DOCIE_SOURCE_DIR) / "configs" / "toy.ini");
}

// ---- 1 ----
Outcome formula_oracles() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  const auto track = [&](double got, double want) {
    worst = std::max(worst, std::fabs(got - want));
  };
  for (int trial = 0; trial < kOracleInstances; ++trial) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng() % 6);
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng() % 6);
    const Vector a = random_vector(rng, d), b = random_vector(rng, d);
    const Matrix w = random_matrix(rng, d, d);
    const double p = random_vector(rng, 1)(0), q = random_vector(rng, 1)(0);

    track(coref::coref_score(a, b, w, p, q), oracle_bilinear(a, w, b) + p + q);
    track(relation::relation_score(a, b, w, p, q), oracle_bilinear(a, w, b) + p + q);

    std::vector<Matrix> scores;
    for (int i = 0; i < 3; ++i) scores.push_back(random_matrix(rng, n, n));
    const Matrix g = random_matrix(rng, n, d);
    nn::ParamStore store;
    interaction::PropagationLayer layer(store, "p", d, 3, false, rng);
    std::vector<Matrix> ws;
    for (std::size_t i = 0; i < 3; ++i) ws.push_back(layer.transform(i).value);
    worst = std::max(worst, (layer.propagate(g, scores) - oracle_propagate(g, scores, ws))
                                .cwiseAbs()
                                .maxCoeff());

    const auto nb = interaction::prune_neighbors(scores, 1 + rng() % static_cast<std::size_t>(n));
    const std::vector<double> beta{0.2, 0.5, 0.3};
    const std::size_t x = rng() % static_cast<std::size_t>(n);
    const std::size_t y = rng() % static_cast<std::size_t>(n);
    track(interaction::compatibility_distance(scores, x, y, nb, beta).weighted,
          oracle_distance(scores, x, y, nb, beta));

    const Matrix dist = random_matrix(rng, n, 1, 2.0);
    std::vector<int> same;
    std::vector<double> dv;
    for (Eigen::Index i = 0; i < n; ++i) {
      same.push_back(static_cast<int>(rng() % 2));
      dv.push_back(dist(i, 0));
    }
    ad::Tape tape;
    track(interaction::contrastive_loss(tape.constant(dist), same, 2.0).scalar(),
          oracle_contrastive(dv, same, 2.0));
  }
  const double secs = seconds_since(t0);
  return verdict(worst <= kOracleTol && secs < kOracleSeconds,
                 "max abs err " + fmt(worst) + " over " + std::to_string(kOracleInstances) +
                     " instances x 5 formulas, " + fmt(secs) + " s");
}

// ---- 2 ----
Outcome gradient_checks() {
  std::mt19937_64 rng(202);
  double coref_err = 0.0, rel_err = 0.0, con_err = 0.0, prop_err = 0.0;
  const Eigen::Index n = 5, d = 4;
  for (int trial = 0; trial < kGradInstances; ++trial) {
    nn::ParamStore store;
    coref::CorefScorer cs(store, "c", d, rng);
    relation::RelationScorer rs(store, "r", d, 2, 6, rng);
    interaction::CompatibilityHead head(store, "gc", 2, false);
    interaction::PropagationLayer prop(store, "p", d, 2, false, rng);

    std::vector<std::optional<std::size_t>> gold(static_cast<std::size_t>(n));
    for (auto& g : gold)
      if (rng() % 4 != 0) g = rng() % 3;
    const auto cp = interaction::contrastive_pairs(gold);
    relation::MentionLevelLabels labels(static_cast<std::size_t>(n));
    for (std::size_t h = 0; h < static_cast<std::size_t>(n); ++h)
      for (std::size_t t = 0; t < static_cast<std::size_t>(n); ++t)
        if (h != t && rng() % 3 == 0) labels.at(h, t) = {rng() % 2};

    const Matrix g = random_matrix(rng, n, d, 0.7);
    const Matrix sm = random_matrix(rng, n, 1);

    coref_err = std::max(
        coref_err, gradcheck(
                       [&](ad::Tape& tape, const std::vector<ad::Var>& x) {
                         return coref::coref_loss(cs.score(tape, x[0], x[1]), x[1], gold).total;
                       },
                       {g, sm}, {&cs.weight()}));

    std::vector<nn::Param*> rel_params, con_params;
    for (auto& p : store.all()) {
      if (p.name.rfind("r.", 0) == 0) {
        rel_params.push_back(&p);
        // The tail prior and the head prior's output bias cancel inside the
        // local-graph distance, so their gradient is zero by construction.
        if (p.name.find("tail_prior") == std::string::npos &&
            p.name != "r.head_prior.output.bias")
          con_params.push_back(&p);
      }
    }
    rel_err = std::max(
        rel_err, gradcheck(
                     [&](ad::Tape& tape, const std::vector<ad::Var>& x) {
                       return relation::relation_loss_mention(rs.score(tape, x[0], x[0]), labels);
                     },
                     {g}, rel_params));

    con_params.push_back(&head.beta_param());
    if (!cp.pairs.empty())
      con_err = std::max(
          con_err, gradcheck(
                       [&](ad::Tape& tape, const std::vector<ad::Var>& x) {
                         auto s = rs.score(tape, x[0], x[0]);
                         s.pop_back();
                         const std::vector<std::size_t> nb{0, 1, 2, 3, 4};
                         const ad::Var dist = head.distance(tape, s, nb);
                         return interaction::contrastive_loss(
                             ad::gather_entries(dist, cp.pairs), cp.same_entity, 2.0);
                       },
                       {g}, con_params));

    const std::vector<Matrix> sc{random_matrix(rng, n, n), random_matrix(rng, n, n)};
    prop_err = std::max(
        prop_err, gradcheck(
                      [&](ad::Tape& tape, const std::vector<ad::Var>& x) {
                        const std::vector<ad::Var> s{x[1], x[2]};
                        return ad::sum(ad::square(prop.propagate(tape, x[0], s)));
                      },
                      {g, sc[0], sc[1]}, {&prop.transform(0), &prop.transform(1)}));
  }
  const double worst = std::max({coref_err, rel_err, con_err, prop_err});
  return verdict(worst <= kGradTol, "max rel err coref " + fmt(coref_err) + ", relation " +
                                        fmt(rel_err) + ", contrastive " + fmt(con_err) +
                                        ", propagation " + fmt(prop_err));
}

bool same_predictions(const std::vector<metrics::DocumentPrediction>& a,
                      const std::vector<metrics::DocumentPrediction>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].triples != b[i].triples || a[i].triple_scores != b[i].triple_scores ||
        a[i].clusters.size() != b[i].clusters.size())
      return false;
    for (std::size_t c = 0; c < a[i].clusters.size(); ++c)
      if (a[i].clusters[c].mentions != b[i].clusters[c].mentions) return false;
  }
  return true;
}

// ---- 3 ----
Outcome degenerate_equivalence() {
  synthetic::ToyOptions opts;
  opts.documents = 8;
  const auto data = synthetic::generate(opts);
  const auto vocab = encoding::Vocabulary::build(data.documents);
  auto jm = toy_config();
  jm.setting = harness::Setting::kJointM;
  jm.epochs = 3;

  // Same parameters, lambda = 0, beta frozen at 0.
  auto gc = jm;
  gc.setting = harness::Setting::kGC;
  gc.lambda = 0.0;
  gc.freeze_beta = true;
  harness::Model a(jm, vocab, data.schema, 5), b(gc, vocab, data.schema, 5);
  b.compatibility()->beta_param().value.setZero();
  const bool gc_init = same_predictions(a.predict(data.documents), b.predict(data.documents));

  // Trained: without the contrastive term the runs must coincide.
  auto gc_trained = gc;
  gc_trained.contrastive_weight = 0.0;
  const auto ra = harness::train(jm, data.documents, data.documents, data.schema, 5);
  const auto rb = harness::train(gc_trained, data.documents, data.documents, data.schema, 5);
  const bool gc_train =
      same_predictions(ra.model->predict(data.documents), rb.model->predict(data.documents));

  auto gp = jm;
  gp.setting = harness::Setting::kGP;
  gp.propagation_zero_init = true;
  harness::Model c(gp, vocab, data.schema, 5);
  bool gp_equal = true;
  for (const auto& doc : data.documents) {
    const auto ta = a.trace(doc), tc = c.trace(doc);
    gp_equal = gp_equal && tc.g_hat == ta.g && tc.coref_scores == ta.coref_scores &&
               tc.mention_scores == ta.mention_scores &&
               tc.relation_scores == ta.relation_scores && tc.clusters == ta.clusters;
  }
  gp_equal = gp_equal && same_predictions(a.predict(data.documents), c.predict(data.documents));
  return verdict(gc_init && gc_train && gp_equal,
                 std::string("gc(lambda=0, beta=0 frozen) == joint_m: ") +
                     (gc_init ? "yes" : "no") + "; after training: " + (gc_train ? "yes" : "no") +
                     "; gp(zero init) first pass == joint_m: " + (gp_equal ? "yes" : "no"));
}

// ---- 4 ----
Outcome label_transfer_round_trip() {
  synthetic::ToyOptions opts;
  opts.documents = kTransferDocs;
  opts.seed = 404;
  const auto data = synthetic::generate(opts);
  const std::size_t r = data.schema.size();
  std::size_t exact = 0;
  for (const auto& doc : data.documents) {
    // Gold mentions plus distractor spans as candidates.
    std::set<corpus::Span> cand_set;
    for (const auto& c : doc.clusters) cand_set.insert(c.mentions.begin(), c.mentions.end());
    for (std::size_t i = 0; i + 1 < doc.size(); i += 3) cand_set.insert({i, i + 1});
    const std::vector<corpus::Span> cands(cand_set.begin(), cand_set.end());
    const auto labels = relation::transfer_labels(doc.clusters, doc.relations, cands);

    std::vector<Matrix> scores(r + 1, Matrix::Zero(static_cast<Eigen::Index>(cands.size()),
                                                   static_cast<Eigen::Index>(cands.size())));
    for (std::size_t h = 0; h < cands.size(); ++h)
      for (std::size_t t = 0; t < cands.size(); ++t) {
        for (std::size_t k : labels.at(h, t))
          scores[k](static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(t)) = 1.0;
        scores[r](static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(t)) = 0.5;  // oracle TH
      }
    coref::IndexClusters groups;
    const auto owner = coref::align_to_gold(cands, doc.clusters);
    groups.resize(doc.clusters.size());
    for (std::size_t i = 0; i < cands.size(); ++i)
      if (owner[i]) groups[*owner[i]].push_back(i);
    const auto table = relation::aggregate_entity_scores(scores, groups);
    std::set<corpus::RelationTriple> got, want(doc.relations.begin(), doc.relations.end());
    for (const auto& t : relation::decode_relations(table)) got.insert(t.triple);
    if (got == want) ++exact;
  }
  return verdict(exact == data.documents.size(),
                 std::to_string(exact) + "/" + std::to_string(data.documents.size()) +
                     " documents reproduce the gold triple set");
}

// ---- 5 ----
Outcome metric_oracles() {
  double worst = 0.0;
  std::size_t n = 0;
  for (const auto& f : metric_fixtures()) {
    ++n;
    const metrics::PRF got[3] = {metrics::muc(f.pred, f.gold), metrics::b_cubed(f.pred, f.gold),
                                 metrics::ceaf_phi4(f.pred, f.gold)};
    for (int m = 0; m < 3; ++m) {
      worst = std::max(worst, std::fabs(got[m].precision - f.expect[3 * m]));
      worst = std::max(worst, std::fabs(got[m].recall - f.expect[3 * m + 1]));
      worst = std::max(worst, std::fabs(got[m].f1 - f.expect[3 * m + 2]));
    }
    const double mean = (got[0].f1 + got[1].f1 + got[2].f1) / 3.0;
    worst = std::max(worst, std::fabs(metrics::coref_avg_f1(f.pred, f.gold) - mean));
  }
  return verdict(n >= 10 && worst <= kMetricTol,
                 std::to_string(n) + " fixtures, max abs err " + fmt(worst));
}

// ---- 6 ----
Outcome postprocessing_mapping() {
  const auto gold_c = letters({"ab", "c", "de"});
  bool ok = metrics::map_entity_ids(letters({"ba", "c", "ed"}), gold_c) ==
            std::vector<std::size_t>{0, 1, 2};
  ok = ok && metrics::map_entity_ids(letters({"a", "c", "dex"}), gold_c) ==
                 std::vector<std::size_t>{3, 1, 4};

  // Scored end to end: a triple touching a mismatched cluster is incorrect.
  const corpus::RelationSchema schema(std::vector<std::string>{"r0", "r1"});
  corpus::Document gold = flat_document(8, "m");
  gold.clusters.resize(3);
  for (std::size_t c = 0; c < 3; ++c) gold.clusters[c].mentions = gold_c[c];
  gold.relations = {{0, 1, 0}, {1, 2, 1}};
  metrics::DocumentPrediction pred;
  pred.doc_id = "m";
  pred.clusters.resize(3);
  pred.clusters[0].mentions = gold_c[0];
  pred.clusters[1].mentions = gold_c[1];
  pred.clusters[2].mentions = {{3, 3}};  // partial match of gold cluster 2
  pred.triples = {{0, 1, 0}, {1, 2, 1}};
  pred.triple_scores = {1.0, 1.0};
  const auto report = metrics::evaluate({pred}, {gold}, schema);
  ok = ok && std::fabs(report.re.precision - 0.5) < 1e-12 &&
       std::fabs(report.re.recall - 0.5) < 1e-12;
  return verdict(ok, "exact match -> gold id, mismatch -> dummy id; RE P/R " +
                         fmt(report.re.precision) + "/" + fmt(report.re.recall) +
                         " (expected 0.5/0.5)");
}

// ---- 7 ----
Outcome toy_overfit() {
  const auto t0 = Clock::now();
  const auto data = synthetic::generate(synthetic::ToyOptions{});
  const auto stats = corpus::corpus_statistics(data.documents);
  const auto vocab = encoding::Vocabulary::build(data.documents);
  std::size_t max_tokens = 0;
  for (const auto& d : data.documents) max_tokens = std::max(max_tokens, d.size());

  bool ok = data.documents.size() == 20 && vocab.size() - 1 <= 200 && max_tokens <= 60 &&
            data.schema.size() == 4;
  std::string detail = "20 docs, vocab " + std::to_string(vocab.size() - 1) + ", max " +
                       std::to_string(max_tokens) + " tokens, " +
                       fmt(stats.avg_entities) + " entities/doc;";
  for (auto s : {harness::Setting::kPipeline, harness::Setting::kJoint,
                 harness::Setting::kJointM, harness::Setting::kGP, harness::Setting::kGC}) {
    auto c = toy_config();
    c.setting = s;
    const auto result = harness::train(c, data.documents, data.documents, data.schema, 1);
    const auto report =
        metrics::evaluate(result.model->predict(data.documents), data.documents, data.schema);
    ok = ok && report.re.f1 >= kOverfitF1;
    detail += " " + harness::to_string(s) + " " + fmt(report.re.f1);
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < kOverfitSeconds;
  return verdict(ok, detail + "; " + fmt(secs) + " s");
}

// ---- 8 ----
Outcome gc_separation() {
  const auto data = synthetic::generate(synthetic::ToyOptions{});
  auto c = toy_config();
  c.setting = harness::Setting::kGC;
  const double margin = *c.margin;
  const auto result = harness::train(c, data.documents, data.documents, data.schema, 1);
  double same = 0.0, diff = 0.0;
  std::size_t n_same = 0, n_diff = 0;
  for (const auto& doc : data.documents) {
    const auto trace = result.model->trace(doc, true);
    const auto gold = coref::align_to_gold(trace.candidates, doc.clusters);
    const auto pairs = interaction::contrastive_pairs(gold);
    for (std::size_t i = 0; i < pairs.pairs.size(); ++i) {
      const auto [x, y] = pairs.pairs[i];
      const double v =
          trace.compatibility(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
      if (pairs.same_entity[i]) {
        same += v;
        ++n_same;
      } else {
        diff += v;
        ++n_diff;
      }
    }
  }
  if (n_same == 0 || n_diff == 0) return {Verdict::kFail, "no gold pairs of one kind"};
  same /= static_cast<double>(n_same);
  diff /= static_cast<double>(n_diff);
  return verdict(diff - same >= margin / 2.0,
                 "mean s_hat Y=1 " + fmt(same) + " (" + std::to_string(n_same) + " pairs), Y=0 " +
                     fmt(diff) + " (" + std::to_string(n_diff) + " pairs), gap " +
                     fmt(diff - same) + " vs m/2 = " + fmt(margin / 2.0));
}

// ---- 9 ----
struct ReferenceStats {
  const char* env;
  const char* name;
  std::size_t trn, dev, tst;
  double tokens, entities, singletons;
};

Outcome dataset_statistics() {
  const ReferenceStats rows[] = {{"DOCIE_DOCRED_DIR", "DocRED", 3053, 998, 1000, 198.2, 19.5, 80.9},
                            {"DOCIE_DWIE_DIR", "DWIE", 702, 0, 100, 623.9, 27.3, 66.1}};
  bool any = false, ok = true;
  std::string detail;
  for (const auto& row : rows) {
    const char* dir = std::getenv(row.env);
    if (!dir || !*dir) continue;
    any = true;
    const auto data = harness::load_data(dir);
    // Statistics over the annotated documents (DocRED test has no labels).
    std::vector<corpus::Document> labelled = data.train;
    if (data.format == "docred")
      labelled.insert(labelled.end(), data.dev.begin(), data.dev.end());
    else
      labelled.insert(labelled.end(), data.test.begin(), data.test.end());
    const auto s = corpus::corpus_statistics(labelled);
    const bool counts = data.train.size() == row.trn && data.dev.size() == row.dev &&
                        data.test.size() == row.tst;
    const bool row_ok = counts && std::fabs(s.avg_tokens - row.tokens) <= kStatTol &&
                        std::fabs(s.avg_entities - row.entities) <= kStatTol &&
                        std::fabs(s.pct_singletons - row.singletons) <= kStatTol;
    ok = ok && row_ok;
    detail += std::string(detail.empty() ? "" : "; ") + row.name + " " +
              std::to_string(data.train.size()) + "/" + std::to_string(data.dev.size()) + "/" +
              std::to_string(data.test.size()) + " docs, " + fmt(s.avg_tokens, 4) +
              " tokens, " + fmt(s.avg_entities, 3) + " entities, " + fmt(s.pct_singletons, 3) +
              "% singletons";
  }
  if (!any) return {Verdict::kSkip, "set DOCIE_DOCRED_DIR and/or DOCIE_DWIE_DIR to run"};
  return verdict(ok, detail);
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"formula oracles", formula_oracles},
      {"gradient checks", gradient_checks},
      {"degenerate equivalence", degenerate_equivalence},
      {"label transfer round trip", label_transfer_round_trip},
      {"metric oracles", metric_oracles},
      {"entity id mapping", postprocessing_mapping},
      {"toy overfit", toy_overfit},
      {"gc separation", gc_separation},
      {"dataset statistics", dataset_statistics},
  };
  int failures = 0, index = 0;
  for (const auto& [name, run] : criteria) {
    ++index;
    Outcome out;
    try {
      out = run();
    } catch (const std::exception& e) {
      out = {Verdict::kFail, std::string("exception: ") + e.what()};
    }
    const char* tag = out.verdict == Verdict::kPass   ? "PASS"
                      : out.verdict == Verdict::kSkip ? "SKIP"
                                                      : "FAIL";
    if (out.verdict == Verdict::kFail) ++failures;
    std::cout << "[" << tag << "] " << index << ". " << name << ": " << out.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
