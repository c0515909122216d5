#include "docie/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "docie/error.hpp"

namespace docie::metrics {

using corpus::Span;

PRF make_prf(double precision, double recall) {
  PRF out{precision, recall, 0.0};
  if (precision + recall > 0.0) out.f1 = 2.0 * precision * recall / (precision + recall);
  return out;
}

Counts& Counts::operator+=(const Counts& o) {
  p_num += o.p_num;
  p_den += o.p_den;
  r_num += o.r_num;
  r_den += o.r_den;
  return *this;
}

PRF Counts::prf() const {
  return make_prf(p_den > 0.0 ? p_num / p_den : 0.0, r_den > 0.0 ? r_num / r_den : 0.0);
}

Clustering clustering_of(const std::vector<corpus::EntityCluster>& clusters) {
  Clustering out;
  out.reserve(clusters.size());
  for (const auto& c : clusters) out.push_back(c.mentions);
  return out;
}

Counts mention_counts(const std::vector<Span>& predicted, const std::vector<Span>& gold) {
  const std::set<Span> p(predicted.begin(), predicted.end());
  const std::set<Span> g(gold.begin(), gold.end());
  double correct = 0.0;
  for (const auto& s : p) correct += g.count(s) ? 1.0 : 0.0;
  return Counts{correct, static_cast<double>(p.size()), correct,
                static_cast<double>(g.size())};
}

namespace {

std::map<Span, std::size_t> owner_map(const Clustering& clusters) {
  std::map<Span, std::size_t> owner;
  for (std::size_t c = 0; c < clusters.size(); ++c)
    for (const auto& m : clusters[c]) owner.emplace(m, c);
  return owner;
}

// MUC recall of `key` against `response` as (numerator, denominator).
std::pair<double, double> muc_side(const Clustering& key, const Clustering& response) {
  const auto owner = owner_map(response);
  double num = 0.0, den = 0.0;
  for (const auto& cluster : key) {
    std::set<std::size_t> parts;
    std::size_t unmatched = 0;
    for (const auto& m : cluster) {
      auto it = owner.find(m);
      if (it == owner.end())
        ++unmatched;
      else
        parts.insert(it->second);
    }
    const double partitions = static_cast<double>(parts.size() + unmatched);
    num += static_cast<double>(cluster.size()) - partitions;
    den += static_cast<double>(cluster.size()) - 1.0;
  }
  return {num, den};
}

std::pair<double, double> b_cubed_side(const Clustering& key,
                                       const Clustering& response) {
  const auto owner = owner_map(response);
  double num = 0.0, den = 0.0;
  for (const auto& cluster : key) {
    const std::set<Span> members(cluster.begin(), cluster.end());
    for (const auto& m : cluster) {
      den += 1.0;
      auto it = owner.find(m);
      if (it == owner.end()) continue;
      double overlap = 0.0;
      for (const auto& r : response[it->second]) overlap += members.count(r) ? 1.0 : 0.0;
      num += overlap / static_cast<double>(cluster.size());
    }
  }
  return {num, den};
}

double phi4(const std::vector<Span>& a, const std::vector<Span>& b) {
  const std::set<Span> sa(a.begin(), a.end());
  double common = 0.0;
  for (const auto& s : b) common += sa.count(s) ? 1.0 : 0.0;
  return 2.0 * common / static_cast<double>(a.size() + b.size());
}

}  // namespace

Counts muc_counts(const Clustering& predicted, const Clustering& gold) {
  const auto [r_num, r_den] = muc_side(gold, predicted);
  const auto [p_num, p_den] = muc_side(predicted, gold);
  return Counts{p_num, p_den, r_num, r_den};
}

Counts b_cubed_counts(const Clustering& predicted, const Clustering& gold) {
  const auto [r_num, r_den] = b_cubed_side(gold, predicted);
  const auto [p_num, p_den] = b_cubed_side(predicted, gold);
  return Counts{p_num, p_den, r_num, r_den};
}

std::vector<long> max_weight_assignment(const std::vector<std::vector<double>>& weights) {
  const std::size_t rows = weights.size();
  const std::size_t cols = rows ? weights.front().size() : 0;
  const std::size_t n = std::max(rows, cols);
  std::vector<long> out(rows, -1);
  if (n == 0) return out;
  // Square min-cost problem on negated weights, 1-based potentials.
  const auto cost = [&](std::size_t i, std::size_t j) {
    return (i < rows && j < cols) ? -weights[i][j] : 0.0;
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t i = match[j];
    if (i >= 1 && i <= rows && j <= cols) out[i - 1] = static_cast<long>(j - 1);
  }
  return out;
}

Counts ceaf_phi4_counts(const Clustering& predicted, const Clustering& gold) {
  std::vector<std::vector<double>> sim(gold.size(),
                                       std::vector<double>(predicted.size(), 0.0));
  for (std::size_t g = 0; g < gold.size(); ++g)
    for (std::size_t p = 0; p < predicted.size(); ++p) sim[g][p] = phi4(gold[g], predicted[p]);
  const auto assignment = max_weight_assignment(sim);
  double total = 0.0;
  for (std::size_t g = 0; g < gold.size(); ++g)
    if (assignment[g] >= 0) total += sim[g][static_cast<std::size_t>(assignment[g])];
  return Counts{total, static_cast<double>(predicted.size()), total,
                static_cast<double>(gold.size())};
}

PRF mention_f1(const std::vector<Span>& predicted, const std::vector<Span>& gold) {
  return mention_counts(predicted, gold).prf();
}
PRF muc(const Clustering& predicted, const Clustering& gold) {
  return muc_counts(predicted, gold).prf();
}
PRF b_cubed(const Clustering& predicted, const Clustering& gold) {
  return b_cubed_counts(predicted, gold).prf();
}
PRF ceaf_phi4(const Clustering& predicted, const Clustering& gold) {
  return ceaf_phi4_counts(predicted, gold).prf();
}
double coref_avg_f1(const Clustering& predicted, const Clustering& gold) {
  return (muc(predicted, gold).f1 + b_cubed(predicted, gold).f1 +
          ceaf_phi4(predicted, gold).f1) /
         3.0;
}

std::vector<std::size_t> map_entity_ids(const Clustering& predicted,
                                        const Clustering& gold) {
  std::map<std::set<Span>, std::size_t> gold_index;
  for (std::size_t g = 0; g < gold.size(); ++g)
    gold_index.emplace(std::set<Span>(gold[g].begin(), gold[g].end()), g);
  std::vector<std::size_t> ids;
  ids.reserve(predicted.size());
  std::size_t next_dummy = gold.size();
  std::set<std::size_t> taken;
  for (const auto& cluster : predicted) {
    auto it = gold_index.find(std::set<Span>(cluster.begin(), cluster.end()));
    if (it != gold_index.end() && taken.insert(it->second).second)
      ids.push_back(it->second);
    else
      ids.push_back(next_dummy++);
  }
  return ids;
}

FactIndex FactIndex::build(const std::vector<corpus::Document>& train,
                           const corpus::RelationSchema& schema) {
  FactIndex index;
  for (const auto& doc : train)
    for (const auto& t : doc.relations)
      for (const auto& h : doc.clusters[t.head].names)
        for (const auto& tl : doc.clusters[t.tail].names)
          index.add(h, tl, schema.name(t.relation));
  return index;
}

void FactIndex::add(const std::string& head, const std::string& tail,
                    const std::string& rel) {
  facts_.emplace(head, tail, rel);
}

bool FactIndex::contains(const std::vector<std::string>& head_names,
                         const std::vector<std::string>& tail_names,
                         const std::string& relation) const {
  for (const auto& h : head_names)
    for (const auto& t : tail_names)
      if (facts_.count({h, t, relation})) return true;
  return false;
}

void FactIndex::save(const std::filesystem::path& path) const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [h, t, r] : facts_) out.push_back({h, t, r});
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << out.dump() << '\n';
}

FactIndex FactIndex::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open " + path.string());
  FactIndex index;
  try {
    for (const auto& row : nlohmann::json::parse(f))
      index.add(row.at(0).get<std::string>(), row.at(1).get<std::string>(),
                row.at(2).get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return index;
}

RelationScores relation_f1(const std::vector<RelationDoc>& docs,
                           const corpus::RelationSchema& schema,
                           const FactIndex* fact_index) {
  double predicted = 0.0, gold_total = 0.0, correct = 0.0, correct_in_train = 0.0;
  for (const auto& doc : docs) {
    const std::set<corpus::RelationTriple> pred(doc.predicted.begin(), doc.predicted.end());
    const std::set<corpus::RelationTriple> gold(doc.gold.begin(), doc.gold.end());
    predicted += static_cast<double>(pred.size());
    gold_total += static_cast<double>(gold.size());
    for (const auto& t : pred) {
      if (!gold.count(t)) continue;
      correct += 1.0;
      if (fact_index != nullptr &&
          fact_index->contains(doc.gold_clusters.at(t.head).names,
                               doc.gold_clusters.at(t.tail).names,
                               schema.name(t.relation)))
        correct_in_train += 1.0;
    }
  }
  RelationScores out;
  const double recall = gold_total > 0.0 ? correct / gold_total : 0.0;
  out.re = make_prf(predicted > 0.0 ? correct / predicted : 0.0, recall);
  const double ign_den = predicted - correct_in_train;
  out.re_ign =
      make_prf(ign_den > 0.0 ? (correct - correct_in_train) / ign_den : 0.0, recall);
  return out;
}

Report evaluate(const std::vector<DocumentPrediction>& predictions,
                const std::vector<corpus::Document>& gold,
                const corpus::RelationSchema& schema, const FactIndex* fact_index) {
  std::unordered_map<std::string, const DocumentPrediction*> by_id;
  for (const auto& p : predictions) by_id[p.doc_id] = &p;
  const DocumentPrediction empty;
  Counts mention, muc_c, b3_c, ceaf_c;
  std::vector<RelationDoc> rel_docs;
  for (const auto& doc : gold) {
    auto it = by_id.find(doc.id);
    const DocumentPrediction& pred = it == by_id.end() ? empty : *it->second;
    const Clustering pc = clustering_of(pred.clusters);
    const Clustering gc = clustering_of(doc.clusters);
    std::vector<Span> pm, gm;
    for (const auto& c : pc) pm.insert(pm.end(), c.begin(), c.end());
    for (const auto& c : gc) gm.insert(gm.end(), c.begin(), c.end());
    mention += mention_counts(pm, gm);
    muc_c += muc_counts(pc, gc);
    b3_c += b_cubed_counts(pc, gc);
    ceaf_c += ceaf_phi4_counts(pc, gc);

    const auto ids = map_entity_ids(pc, gc);
    RelationDoc rd;
    rd.gold = doc.relations;
    rd.gold_clusters = doc.clusters;
    for (const auto& t : pred.triples)
      rd.predicted.push_back({ids.at(t.head), ids.at(t.tail), t.relation});
    rel_docs.push_back(std::move(rd));
  }
  Report report;
  report.documents = gold.size();
  report.mention = mention.prf();
  report.muc = muc_c.prf();
  report.b_cubed = b3_c.prf();
  report.ceaf_phi4 = ceaf_c.prf();
  report.coref_avg_f1 = (report.muc.f1 + report.b_cubed.f1 + report.ceaf_phi4.f1) / 3.0;
  const auto rel = relation_f1(rel_docs, schema, fact_index);
  report.re = rel.re;
  report.re_ign = rel.re_ign;
  return report;
}

}  // namespace docie::metrics
