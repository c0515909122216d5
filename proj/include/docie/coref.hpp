#pragma once

// Pairwise coreference scoring with a single bilinear form, singleton-aware
// antecedent decoding, and the antecedent + mention-detection losses.

#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "docie/autodiff.hpp"
#include "docie/corpus.hpp"
#include "docie/nn.hpp"

namespace docie::coref {

// s^c(x, y) = g_x W g_y^T + s^m_x + s^m_y. Throws std::invalid_argument on
// dimension mismatch.
double coref_score(const Vector& g_x, const Vector& g_y, const Matrix& weight,
                   double mention_x, double mention_y);

// Score matrix layout: scores(x, y) with x the antecedent (earlier) and y
// the anaphor. Only x < y entries are consulted by decoding and the loss.
class CorefScorer {
 public:
  CorefScorer() = default;
  CorefScorer(nn::ParamStore& store, const std::string& name, Eigen::Index dim,
              std::mt19937_64& rng);

  Matrix score(const Matrix& g, const Vector& mention_scores) const;
  ad::Var score(ad::Tape& tape, const ad::Var& g,
                const ad::Var& mention_scores) const;

  const nn::Param& weight() const { return *weight_; }
  nn::Param& weight() { return *weight_; }

 private:
  nn::Param* weight_ = nullptr;
};

// Candidate indices grouped into clusters, each sorted ascending; clusters
// ordered by their first member.
using IndexClusters = std::vector<std::vector<std::size_t>>;

// Each candidate links to its best earlier antecedent when that score is
// > 0 (ties go to the earliest); links are closed transitively. Unlinked
// candidates survive as singletons iff their mention score is > 0.
IndexClusters decode_clusters(const Matrix& scores, const Vector& mention_scores);

std::vector<corpus::EntityCluster> to_entity_clusters(
    const IndexClusters& clusters, std::span<const corpus::Span> spans,
    const corpus::Document* doc = nullptr);

// Gold cluster index of each candidate by exact span match, or nullopt.
std::vector<std::optional<std::size_t>> align_to_gold(
    std::span<const corpus::Span> spans,
    const std::vector<corpus::EntityCluster>& gold);

struct CorefLossParts {
  ad::Var antecedent;  // negative marginal log-likelihood, summed
  ad::Var mention;     // BCE on s^m, summed
  ad::Var total;       // antecedent + mention_weight * mention
};

CorefLossParts coref_loss(const ad::Var& scores, const ad::Var& mention_scores,
                          std::span<const std::optional<std::size_t>> gold_of,
                          double mention_weight = 1.0);

}  // namespace docie::coref
