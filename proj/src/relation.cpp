#include "docie/relation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

namespace docie::relation {

double relation_score(const Vector& g_h, const Vector& g_t, const Matrix& weight,
                      double head_prior, double tail_prior) {
  if (g_h.size() != weight.rows() || g_t.size() != weight.cols())
    throw std::invalid_argument("relation_score: dimension mismatch");
  return g_h.dot(weight * g_t) + head_prior + tail_prior;
}

RelationScorer::RelationScorer(nn::ParamStore& store, const std::string& name,
                               Eigen::Index dim, std::size_t num_relations,
                               Eigen::Index prior_hidden, std::mt19937_64& rng)
    : num_relations_(num_relations) {
  if (num_relations == 0) throw std::invalid_argument("RelationScorer: |R| >= 1");
  for (std::size_t i = 0; i <= num_relations; ++i)
    weights_.push_back(&store.create(name + ".bilinear." + std::to_string(i),
                                     nn::xavier_uniform(dim, dim, rng),
                                     nn::ParamGroup::kTask));
  const auto types = static_cast<Eigen::Index>(num_relations + 1);
  head_prior_ = nn::FeedForward(store, name + ".head_prior", dim, prior_hidden,
                                types, nn::ParamGroup::kTask, rng);
  tail_prior_ = nn::FeedForward(store, name + ".tail_prior", dim, prior_hidden,
                                types, nn::ParamGroup::kTask, rng);
}

std::vector<Matrix> RelationScorer::score(const Matrix& heads,
                                          const Matrix& tails) const {
  const Matrix hp = head_prior_.apply(heads);
  const Matrix tp = tail_prior_.apply(tails);
  std::vector<Matrix> out;
  out.reserve(num_types());
  for (std::size_t i = 0; i < num_types(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    Matrix s = heads * weights_[i]->value * tails.transpose();
    s.colwise() += hp.col(c);
    s.rowwise() += tp.col(c).transpose();
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ad::Var> RelationScorer::score(ad::Tape& tape, const ad::Var& heads,
                                           const ad::Var& tails) const {
  const ad::Var hp = head_prior_.forward(tape, heads);
  const ad::Var tp = tail_prior_.forward(tape, tails);
  std::vector<ad::Var> out;
  out.reserve(num_types());
  for (std::size_t i = 0; i < num_types(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    const ad::Var w = nn::bind(tape, *weights_[i]);
    out.push_back(ad::add_outer(ad::matmul_nt(ad::matmul(heads, w), tails),
                                ad::column(hp, c), ad::column(tp, c)));
  }
  return out;
}

double RelationScorer::score_pair(const Vector& g_h, const Vector& g_t,
                                  std::size_t type) const {
  if (type >= num_types()) throw std::out_of_range("relation type index");
  if (g_h.size() != weights_[type]->value.rows() ||
      g_t.size() != weights_[type]->value.cols())
    throw std::invalid_argument("score_pair: dimension mismatch");
  const auto c = static_cast<Eigen::Index>(type);
  const double hp = head_prior_.apply(g_h.transpose())(0, c);
  const double tp = tail_prior_.apply(g_t.transpose())(0, c);
  return relation_score(g_h, g_t, weights_[type]->value, hp, tp);
}

MentionLevelLabels transfer_labels(const std::vector<corpus::EntityCluster>& gold,
                                   const std::vector<corpus::RelationTriple>& triples,
                                   std::span<const corpus::Span> candidates) {
  const auto owner = coref::align_to_gold(candidates, gold);
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> by_entity;
  for (const auto& t : triples) by_entity[{t.head, t.tail}].push_back(t.relation);
  for (auto& [_, rels] : by_entity) {
    std::sort(rels.begin(), rels.end());
    rels.erase(std::unique(rels.begin(), rels.end()), rels.end());
  }
  const std::size_t n = candidates.size();
  MentionLevelLabels labels(n);
  for (std::size_t h = 0; h < n; ++h) {
    if (!owner[h]) continue;
    for (std::size_t t = 0; t < n; ++t) {
      if (t == h || !owner[t]) continue;
      auto it = by_entity.find({*owner[h], *owner[t]});
      if (it != by_entity.end()) labels.at(h, t) = it->second;
    }
  }
  return labels;
}

EntityScoreTable aggregate_entity_scores(std::span<const Matrix> mention_scores,
                                         const coref::IndexClusters& clusters) {
  const auto e = static_cast<Eigen::Index>(clusters.size());
  EntityScoreTable out;
  for (const Matrix& s : mention_scores) {
    Matrix table = Matrix::Zero(e, e);
    for (Eigen::Index a = 0; a < e; ++a)
      for (Eigen::Index b = 0; b < e; ++b) {
        double total = 0.0;
        std::size_t count = 0;
        for (std::size_t mh : clusters[static_cast<std::size_t>(a)])
          for (std::size_t mt : clusters[static_cast<std::size_t>(b)]) {
            if (mh == mt) continue;
            total += s(static_cast<Eigen::Index>(mh), static_cast<Eigen::Index>(mt));
            ++count;
          }
        table(a, b) = count ? total / static_cast<double>(count) : 0.0;
      }
    out.tables.push_back(std::move(table));
  }
  return out;
}

std::vector<ScoredTriple> decode_relations(const EntityScoreTable& table) {
  std::vector<ScoredTriple> out;
  if (table.tables.size() < 2) return out;
  const std::size_t th = table.tables.size() - 1;
  const auto e = static_cast<Eigen::Index>(table.num_entities());
  for (Eigen::Index h = 0; h < e; ++h)
    for (Eigen::Index t = 0; t < e; ++t) {
      if (h == t) continue;
      const double threshold = table.tables[th](h, t);
      for (std::size_t r = 0; r < th; ++r) {
        const double s = table.tables[r](h, t);
        if (s > threshold)
          out.push_back({{static_cast<std::size_t>(h), static_cast<std::size_t>(t), r},
                         s - threshold});
      }
    }
  return out;
}

LabeledPairs pairs_from_mention_labels(const MentionLevelLabels& labels) {
  LabeledPairs out;
  const std::size_t n = labels.size();
  for (std::size_t h = 0; h < n; ++h)
    for (std::size_t t = 0; t < n; ++t) {
      if (h == t) continue;
      out.pairs.emplace_back(h, t);
      out.labels.push_back(labels.at(h, t));
    }
  return out;
}

LabeledPairs pairs_from_entity_triples(std::size_t num_entities,
                                       const std::vector<corpus::RelationTriple>& triples) {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> by_pair;
  for (const auto& t : triples) by_pair[{t.head, t.tail}].push_back(t.relation);
  LabeledPairs out;
  for (std::size_t h = 0; h < num_entities; ++h)
    for (std::size_t t = 0; t < num_entities; ++t) {
      if (h == t) continue;
      out.pairs.emplace_back(h, t);
      auto it = by_pair.find({h, t});
      std::vector<std::size_t> rels;
      if (it != by_pair.end()) rels = it->second;
      std::sort(rels.begin(), rels.end());
      rels.erase(std::unique(rels.begin(), rels.end()), rels.end());
      out.labels.push_back(std::move(rels));
    }
  return out;
}

ad::Var adaptive_threshold_loss(std::span<const ad::Var> type_scores,
                                const LabeledPairs& pairs) {
  if (type_scores.empty()) throw std::invalid_argument("adaptive_threshold_loss: no types");
  ad::Tape& tape = *type_scores.front().tape();
  const auto p = static_cast<Eigen::Index>(pairs.pairs.size());
  if (p == 0) return tape.constant(Matrix::Zero(1, 1));
  const auto types = static_cast<Eigen::Index>(type_scores.size());
  const Eigen::Index th = types - 1;

  std::vector<ad::Var> columns;
  columns.reserve(type_scores.size());
  for (const ad::Var& s : type_scores)
    columns.push_back(ad::gather_entries(s, pairs.pairs));
  const ad::Var logits = ad::concat_cols(columns);  // P x types

  Matrix positive = Matrix::Zero(p, types);
  for (Eigen::Index i = 0; i < p; ++i)
    for (std::size_t r : pairs.labels[static_cast<std::size_t>(i)]) {
      if (static_cast<Eigen::Index>(r) >= th)
        throw std::out_of_range("adaptive_threshold_loss: label index");
      positive(i, static_cast<Eigen::Index>(r)) = 1.0;
    }
  Matrix pos_mask = positive;
  pos_mask.col(th).setOnes();
  Matrix neg_mask = Matrix::Ones(p, types) - positive;
  const Matrix counts = positive.rowwise().sum();
  Matrix th_select = Matrix::Zero(p, types);
  th_select.col(th).setOnes();

  // sum_r∈P [lse(P ∪ TH) - l_r]  +  [lse(N ∪ TH) - l_TH]
  const ad::Var rank_pos = ad::sub(
      ad::sum(ad::cwise_mul(ad::masked_row_logsumexp(logits, pos_mask), counts)),
      ad::sum(ad::cwise_mul(logits, positive)));
  const ad::Var rank_neg =
      ad::sub(ad::sum(ad::masked_row_logsumexp(logits, neg_mask)),
              ad::sum(ad::cwise_mul(logits, th_select)));
  return ad::scale(ad::add(rank_pos, rank_neg), 1.0 / static_cast<double>(p));
}

ad::Var relation_loss_mention(std::span<const ad::Var> type_scores,
                              const MentionLevelLabels& labels) {
  return adaptive_threshold_loss(type_scores, pairs_from_mention_labels(labels));
}

Matrix pool_entities(const Matrix& mention_embeddings,
                     std::span<const std::vector<std::size_t>> groups) {
  Matrix out(static_cast<Eigen::Index>(groups.size()), mention_embeddings.cols());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) throw std::invalid_argument("pool_entities: empty cluster");
    for (Eigen::Index c = 0; c < mention_embeddings.cols(); ++c) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t r : groups[g])
        mx = std::max(mx, mention_embeddings(static_cast<Eigen::Index>(r), c));
      double z = 0.0;
      for (std::size_t r : groups[g])
        z += std::exp(mention_embeddings(static_cast<Eigen::Index>(r), c) - mx);
      out(static_cast<Eigen::Index>(g), c) = mx + std::log(z);
    }
  }
  return out;
}

ad::Var pool_entities(const ad::Var& mention_embeddings,
                      std::span<const std::vector<std::size_t>> groups) {
  return ad::logsumexp_pool(mention_embeddings, groups);
}

double relation_score_entity_baseline(const RelationScorer& scorer,
                                      const Matrix& mentions_h,
                                      const Matrix& mentions_t, std::size_t type) {
  if (mentions_h.rows() == 0 || mentions_t.rows() == 0)
    throw std::invalid_argument("relation_score_entity_baseline: empty cluster");
  std::vector<std::size_t> head_rows(static_cast<std::size_t>(mentions_h.rows()));
  std::vector<std::size_t> tail_rows(static_cast<std::size_t>(mentions_t.rows()));
  std::iota(head_rows.begin(), head_rows.end(), 0);
  std::iota(tail_rows.begin(), tail_rows.end(), 0);
  const Matrix eh = pool_entities(mentions_h, std::span(&head_rows, 1));
  const Matrix et = pool_entities(mentions_t, std::span(&tail_rows, 1));
  return scorer.score_pair(eh.row(0).transpose(), et.row(0).transpose(), type);
}

}  // namespace docie::relation
