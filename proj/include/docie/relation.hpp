#pragma once

// Biaffine relation scoring over mention or entity embeddings, mention-level
// label transfer, MEAN aggregation to entity pairs and adaptive-threshold
// decoding / loss. Type index |R| is the threshold pseudo-type (TH).

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "docie/autodiff.hpp"
#include "docie/coref.hpp"
#include "docie/corpus.hpp"
#include "docie/nn.hpp"

namespace docie::relation {

// s = g_h W g_t^T + prior_h + prior_t
double relation_score(const Vector& g_h, const Vector& g_t, const Matrix& weight,
                      double head_prior, double tail_prior);

class RelationScorer {
 public:
  RelationScorer() = default;
  // num_relations = |R|; the scorer holds |R| + 1 bilinear forms.
  RelationScorer(nn::ParamStore& store, const std::string& name, Eigen::Index dim,
                 std::size_t num_relations, Eigen::Index prior_hidden,
                 std::mt19937_64& rng);

  std::size_t num_relations() const { return num_relations_; }
  std::size_t threshold_index() const { return num_relations_; }
  std::size_t num_types() const { return num_relations_ + 1; }

  // One (heads x tails) matrix per type, TH last.
  std::vector<Matrix> score(const Matrix& heads, const Matrix& tails) const;
  std::vector<ad::Var> score(ad::Tape& tape, const ad::Var& heads,
                             const ad::Var& tails) const;
  // Single entry; throws on invalid type or dimension mismatch.
  double score_pair(const Vector& g_h, const Vector& g_t, std::size_t type) const;

  const nn::Param& weight(std::size_t type) const { return *weights_.at(type); }
  nn::Param& weight(std::size_t type) { return *weights_.at(type); }

 private:
  std::size_t num_relations_ = 0;
  std::vector<nn::Param*> weights_;
  nn::FeedForward head_prior_;
  nn::FeedForward tail_prior_;
};

// Relation types expressed by each ordered candidate pair.
class MentionLevelLabels {
 public:
  MentionLevelLabels() = default;
  explicit MentionLevelLabels(std::size_t n) : n_(n), labels_(n * n) {}

  std::size_t size() const { return n_; }
  const std::vector<std::size_t>& at(std::size_t h, std::size_t t) const {
    return labels_[h * n_ + t];
  }
  std::vector<std::size_t>& at(std::size_t h, std::size_t t) {
    return labels_[h * n_ + t];
  }

 private:
  std::size_t n_ = 0;
  std::vector<std::vector<std::size_t>> labels_;
};

// (m_h, m_t) carries r iff a gold triple (e_h, e_t, r) has m_h in e_h and
// m_t in e_t. Pairs touching a non-gold candidate, and self pairs, are empty.
MentionLevelLabels transfer_labels(const std::vector<corpus::EntityCluster>& gold,
                                   const std::vector<corpus::RelationTriple>& triples,
                                   std::span<const corpus::Span> candidates);

// Entity-pair scores per type: tables[type](e_h, e_t).
struct EntityScoreTable {
  std::vector<Matrix> tables;

  std::size_t num_entities() const {
    return tables.empty() ? 0 : static_cast<std::size_t>(tables.front().rows());
  }
};

// MEAN over e_h x e_t of mention-pair scores, skipping m_h == m_t.
EntityScoreTable aggregate_entity_scores(std::span<const Matrix> mention_scores,
                                         const coref::IndexClusters& clusters);

struct ScoredTriple {
  corpus::RelationTriple triple;
  double score = 0.0;  // s^{r} - s^{TH}
};

// Emits (h, t, r) iff s^r(h, t) > s^TH(h, t) strictly, never for h == t.
// The last table is TH.
std::vector<ScoredTriple> decode_relations(const EntityScoreTable& table);

// Ordered pairs (h != t) with their positive label sets.
struct LabeledPairs {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<std::vector<std::size_t>> labels;
};

LabeledPairs pairs_from_mention_labels(const MentionLevelLabels& labels);
LabeledPairs pairs_from_entity_triples(std::size_t num_entities,
                                       const std::vector<corpus::RelationTriple>& triples);

// Adaptive-thresholding ranking loss averaged over pairs: positives are
// pushed above TH (softmax over positives + TH) and TH above every negative
// (softmax over negatives + TH).
ad::Var adaptive_threshold_loss(std::span<const ad::Var> type_scores,
                                const LabeledPairs& pairs);

ad::Var relation_loss_mention(std::span<const ad::Var> type_scores,
                              const MentionLevelLabels& labels);

// Element-wise log-sum-exp pooling of member rows into entity embeddings.
Matrix pool_entities(const Matrix& mention_embeddings,
                     std::span<const std::vector<std::size_t>> groups);
ad::Var pool_entities(const ad::Var& mention_embeddings,
                      std::span<const std::vector<std::size_t>> groups);

// Entity-level baseline score for one type from a cluster's mention
// embeddings (rows of `mentions_h` / `mentions_t`). Throws on empty input.
double relation_score_entity_baseline(const RelationScorer& scorer,
                                      const Matrix& mentions_h,
                                      const Matrix& mentions_t, std::size_t type);

}  // namespace docie::relation
