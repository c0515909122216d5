#include "docie/model.hpp"

#include <random>
#include <stdexcept>

namespace docie::harness {

using corpus::Document;
using corpus::Span;

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  coref += o.coref;
  mention += o.mention;
  relation += o.relation;
  contrastive += o.contrastive;
  total += o.total;
  return *this;
}

LossBreakdown LossBreakdown::scaled(double f) const {
  return {coref * f, mention * f, relation * f, contrastive * f, total * f};
}

struct Model::Pass {
  std::size_t num_tokens = 0;
  ad::Var tokens;      // coreference (or shared) encoder output
  ad::Var re_tokens;   // pipeline relation encoder output
  std::vector<Span> candidates;
  ad::Var g;
  ad::Var mention_scores;  // n x 1
  ad::Var g_hat;
  ad::Var coref_scores;
  std::vector<ad::Var> relation_scores;
  ad::Var compatibility;
  std::vector<std::size_t> neighbors;
};

namespace {

ad::Var zero(ad::Tape& tape) { return tape.constant(Matrix::Zero(1, 1)); }

std::vector<ad::Var> real_types(const std::vector<ad::Var>& scores) {
  return {scores.begin(), scores.end() - 1};
}

std::vector<Matrix> values(const std::vector<ad::Var>& vars) {
  std::vector<Matrix> out;
  out.reserve(vars.size());
  for (const auto& v : vars) out.push_back(v.value());
  return out;
}

// Entity embeddings pooled from the given clusters' spans, plus per-type
// entity-pair scores.
std::vector<ad::Var> entity_scores(ad::Tape& tape, const relation::RelationScorer& scorer,
                                   const ad::Var& tokens, const std::vector<Span>& spans,
                                   const std::vector<std::vector<std::size_t>>& groups) {
  const ad::Var mentions = encoding::span_embeddings(tokens, spans);
  const ad::Var entities = relation::pool_entities(mentions, groups);
  return scorer.score(tape, entities, entities);
}

}  // namespace

Model::Model(const SettingConfig& config, encoding::Vocabulary vocab,
             corpus::RelationSchema schema, std::uint64_t seed)
    : config_(config),
      vocab_(std::make_unique<encoding::Vocabulary>(std::move(vocab))),
      schema_(std::move(schema)),
      seed_(seed),
      store_(std::make_unique<nn::ParamStore>()) {
  validate(config_);
  std::mt19937_64 rng(seed);
  const auto dim = static_cast<Eigen::Index>(config_.dim);
  const auto hidden = static_cast<Eigen::Index>(config_.ffnn_hidden);
  const Eigen::Index span_dim = 2 * dim;
  const bool pipeline = config_.setting == Setting::kPipeline;
  const std::string prefix = pipeline ? "coref." : "";

  encoder_ = std::make_unique<encoding::WindowEncoder>(
      *store_, prefix + "encoder", *vocab_, dim, config_.max_input_length, rng);
  mention_scorer_ = encoding::MentionScorer(*store_, prefix + "mention", span_dim, hidden, rng);
  coref_scorer_ = coref::CorefScorer(*store_, prefix + "coref", span_dim, rng);
  if (pipeline) {
    re_store_ = std::make_unique<nn::ParamStore>();
    re_encoder_ = std::make_unique<encoding::WindowEncoder>(
        *re_store_, "re.encoder", *vocab_, dim, config_.max_input_length, rng);
    relation_scorer_ = relation::RelationScorer(*re_store_, "re.relation", span_dim,
                                                schema_.size(), hidden, rng);
  } else {
    relation_scorer_ =
        relation::RelationScorer(*store_, "relation", span_dim, schema_.size(), hidden, rng);
  }
  if (config_.setting == Setting::kGP)
    prop_.emplace(*store_, "propagation", span_dim, schema_.size(),
                  config_.propagation_zero_init, rng);
  if (config_.setting == Setting::kGC)
    compat_.emplace(*store_, "compatibility", schema_.size(), config_.freeze_beta);
}

std::vector<nn::ParamStore*> Model::stores() {
  std::vector<nn::ParamStore*> out{store_.get()};
  if (re_store_) out.push_back(re_store_.get());
  return out;
}

std::vector<const nn::ParamStore*> Model::stores() const {
  std::vector<const nn::ParamStore*> out{store_.get()};
  if (re_store_) out.push_back(re_store_.get());
  return out;
}

Model::Pass Model::run(ad::Tape& tape, const Document& doc, bool training) const {
  Pass pass;
  pass.tokens = encoder_->encode(tape, doc);
  pass.num_tokens = static_cast<std::size_t>(pass.tokens.rows());
  if (re_encoder_) pass.re_tokens = re_encoder_->encode(tape, doc);

  const auto spans =
      encoding::enumerate_spans(doc, config_.max_span_width, false, pass.num_tokens);
  if (spans.empty()) return pass;
  const ad::Var g_all = encoding::span_embeddings(pass.tokens, spans);
  const ad::Var sm_all = mention_scorer_.score(tape, g_all);

  std::vector<Span> forced;
  if (training && config_.force_gold_mentions)
    for (const auto& c : doc.clusters)
      for (const auto& m : c.mentions)
        if (m.end < pass.num_tokens) forced.push_back(m);
  const encoding::PruneOptions prune{config_.mention_ratio, config_.candidate_cap};
  const auto keep = encoding::prune_spans(spans, sm_all.value().col(0), pass.num_tokens,
                                          prune, forced);
  if (keep.empty()) return pass;
  for (std::size_t i : keep) pass.candidates.push_back(spans[i]);
  pass.g = ad::gather_rows(g_all, keep);
  pass.mention_scores = ad::gather_rows(sm_all, keep);

  if (mention_level(config_.setting))
    pass.relation_scores = relation_scorer_.score(tape, pass.g, pass.g);

  ad::Var coref_input = pass.g;
  if (prop_) {
    pass.g_hat = prop_->propagate(tape, pass.g, real_types(pass.relation_scores));
    coref_input = pass.g_hat;
  }
  pass.coref_scores = coref_scorer_.score(tape, coref_input, pass.mention_scores);

  if (compat_) {
    const auto real = real_types(pass.relation_scores);
    pass.neighbors = interaction::prune_neighbors(values(real), *config_.prune_k);
    pass.compatibility = compat_->distance(tape, real, pass.neighbors);
    pass.coref_scores =
        interaction::interpolate_coref(pass.coref_scores, pass.compatibility, *config_.lambda);
  }
  return pass;
}

ad::Var Model::loss(ad::Tape& tape, const Document& doc, LossBreakdown* parts) const {
  const Pass pass = run(tape, doc, true);
  const auto gold_of = coref::align_to_gold(pass.candidates, doc.clusters);

  ad::Var antecedent = zero(tape), mention = zero(tape), rel = zero(tape),
          contrast = zero(tape);
  if (!pass.candidates.empty()) {
    const auto c = coref::coref_loss(pass.coref_scores, pass.mention_scores, gold_of, 1.0);
    antecedent = c.antecedent;
    mention = c.mention;
  }

  if (mention_level(config_.setting)) {
    if (!pass.candidates.empty())
      rel = relation::relation_loss_mention(
          pass.relation_scores,
          relation::transfer_labels(doc.clusters, doc.relations, pass.candidates));
  } else {
    // Entity-level relation training on gold clusters.
    std::vector<Span> spans;
    std::vector<std::vector<std::size_t>> groups;
    std::vector<std::optional<std::size_t>> kept(doc.clusters.size());
    for (std::size_t c = 0; c < doc.clusters.size(); ++c) {
      std::vector<std::size_t> group;
      for (const auto& m : doc.clusters[c].mentions)
        if (m.end < pass.num_tokens) {
          group.push_back(spans.size());
          spans.push_back(m);
        }
      if (group.empty()) continue;
      kept[c] = groups.size();
      groups.push_back(std::move(group));
    }
    std::vector<corpus::RelationTriple> triples;
    for (const auto& t : doc.relations)
      if (kept[t.head] && kept[t.tail]) triples.push_back({*kept[t.head], *kept[t.tail], t.relation});
    if (!groups.empty()) {
      const ad::Var& tokens = re_encoder_ ? pass.re_tokens : pass.tokens;
      const auto scores = entity_scores(tape, relation_scorer_, tokens, spans, groups);
      rel = relation::adaptive_threshold_loss(
          scores, relation::pairs_from_entity_triples(groups.size(), triples));
    }
  }

  if (compat_ && !pass.candidates.empty()) {
    const auto pairs = interaction::contrastive_pairs(gold_of);
    if (!pairs.pairs.empty())
      contrast = interaction::contrastive_loss(
          ad::gather_entries(pass.compatibility, pairs.pairs), pairs.same_entity,
          *config_.margin);
  }

  const ad::Var w_ant = ad::scale(antecedent, config_.coref_weight);
  const ad::Var w_men = ad::scale(mention, config_.coref_weight * config_.mention_weight);
  const ad::Var w_rel = ad::scale(rel, config_.relation_weight);
  const ad::Var w_con = ad::scale(contrast, config_.contrastive_weight);
  const ad::Var total = ad::add(ad::add(w_ant, w_men), ad::add(w_rel, w_con));
  if (parts != nullptr) {
    parts->coref = w_ant.scalar();
    parts->mention = w_men.scalar();
    parts->relation = w_rel.scalar();
    parts->contrastive = w_con.scalar();
    parts->total = total.scalar();
  }
  return total;
}

Trace Model::trace(const Document& doc, bool training) const {
  ad::Tape tape;
  const Pass pass = run(tape, doc, training);
  Trace t;
  t.candidates = pass.candidates;
  if (pass.candidates.empty()) return t;
  t.g = pass.g.value();
  t.mention_scores = pass.mention_scores.value().col(0);
  if (pass.g_hat.valid()) t.g_hat = pass.g_hat.value();
  t.coref_scores = pass.coref_scores.value();
  t.relation_scores = values(pass.relation_scores);
  if (pass.compatibility.valid()) t.compatibility = pass.compatibility.value();
  t.neighbors = pass.neighbors;
  t.clusters = coref::decode_clusters(t.coref_scores, t.mention_scores);
  return t;
}

metrics::DocumentPrediction Model::predict(const Document& doc) const {
  ad::Tape tape;
  const Pass pass = run(tape, doc, false);
  metrics::DocumentPrediction out;
  out.doc_id = doc.id;
  if (pass.candidates.empty()) return out;

  const auto clusters = coref::decode_clusters(pass.coref_scores.value(),
                                               pass.mention_scores.value().col(0));
  out.clusters = coref::to_entity_clusters(clusters, pass.candidates, &doc);
  if (clusters.empty()) return out;

  relation::EntityScoreTable table;
  if (mention_level(config_.setting)) {
    table = relation::aggregate_entity_scores(values(pass.relation_scores), clusters);
  } else {
    const ad::Var& tokens = re_encoder_ ? pass.re_tokens : pass.tokens;
    table.tables = values(entity_scores(tape, relation_scorer_, tokens, pass.candidates,
                                        clusters));
  }
  for (const auto& st : relation::decode_relations(table)) {
    out.triples.push_back(st.triple);
    out.triple_scores.push_back(st.score);
  }
  return out;
}

std::vector<metrics::DocumentPrediction> Model::predict(
    const std::vector<Document>& docs) const {
  std::vector<metrics::DocumentPrediction> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(predict(d));
  return out;
}

}  // namespace docie::harness
