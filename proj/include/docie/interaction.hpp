#pragma once

// Task interactions layered on mention-level joint scoring:
//  * graph propagation (+GP): per relation type attention over the relation
//    score graph, residual update of mention embeddings before coreference;
//  * graph compatibility (+GC): L1 distance between two mentions' relation
//    score rows over a pruned neighbour set, interpolated into coreference
//    scores and trained with a margin contrastive loss.
// All inputs `type_scores` here are the |R| real relation types (TH excluded).

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "docie/autodiff.hpp"
#include "docie/nn.hpp"

namespace docie::interaction {

// Row-wise attention alpha(h, t) = exp(relu(s(h, t))) / sum_{k != h}
// exp(relu(s(h, k))), zero on the diagonal. A 1x1 input yields a zero row.
Matrix propagation_attention(const Matrix& scores);
ad::Var propagation_attention(const ad::Var& scores);

class PropagationLayer {
 public:
  PropagationLayer() = default;
  // zero_init gives a layer that is the identity map until trained.
  PropagationLayer(nn::ParamStore& store, const std::string& name,
                   Eigen::Index dim, std::size_t num_relations, bool zero_init,
                   std::mt19937_64& rng);

  // g_hat_v = g_v + (1/|R|) sum_i tanh(sum_{t != v} alpha_i(v, t) g_t W_i)
  Matrix propagate(const Matrix& g, std::span<const Matrix> type_scores) const;
  ad::Var propagate(ad::Tape& tape, const ad::Var& g,
                    std::span<const ad::Var> type_scores) const;

  std::size_t num_relations() const { return transforms_.size(); }
  nn::Param& transform(std::size_t i) { return *transforms_.at(i); }

 private:
  std::vector<nn::Param*> transforms_;
};

// Document-wide top-k nodes by saliency (sum of all real-type scores in
// head and tail role, self pairs excluded); ties go to the lower index.
// Returned sorted ascending. Throws if k == 0.
std::vector<std::size_t> prune_neighbors(std::span<const Matrix> type_scores,
                                         std::size_t k);

// D(x, y) = sum_{k in neighbors, k != x, y} |s(x, k) - s(y, k)|.
Matrix local_graph_distance(const Matrix& scores,
                            std::span<const std::size_t> neighbors);
ad::Var local_graph_distance(const ad::Var& scores,
                             std::span<const std::size_t> neighbors);

struct Compatibility {
  std::vector<double> per_type;  // d^{r_i}_{x,y}
  double weighted = 0.0;         // sum_i beta_i d^{r_i}_{x,y}
};

Compatibility compatibility_distance(std::span<const Matrix> type_scores,
                                     std::size_t x, std::size_t y,
                                     std::span<const std::size_t> neighbors,
                                     std::span<const double> beta);

class CompatibilityHead {
 public:
  CompatibilityHead() = default;
  CompatibilityHead(nn::ParamStore& store, const std::string& name,
                    std::size_t num_relations, bool freeze_beta);

  Matrix distance(std::span<const Matrix> type_scores,
                  std::span<const std::size_t> neighbors) const;
  ad::Var distance(ad::Tape& tape, std::span<const ad::Var> type_scores,
                   std::span<const std::size_t> neighbors) const;

  std::vector<double> beta() const;
  nn::Param& beta_param() { return *beta_; }

 private:
  nn::Param* beta_ = nullptr;
};

// s_tilde = s - lambda * s_hat. Throws if lambda < 0.
Matrix interpolate_coref(const Matrix& coref_scores, const Matrix& distance,
                         double lambda);
ad::Var interpolate_coref(const ad::Var& coref_scores, const ad::Var& distance,
                          double lambda);

// Y * D^2 + (1 - Y) * max(0, m - D)^2 for a single pair.
double contrastive_term(double distance, bool same_entity, double margin);

// Mean contrastive term over pairs; distances are clamped at 0 first.
ad::Var contrastive_loss(const ad::Var& distances, std::span<const int> same_entity,
                         double margin);

// Unordered gold-aligned candidate pairs (x < y) with Y = same gold cluster.
struct ContrastivePairs {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<int> same_entity;
};
ContrastivePairs contrastive_pairs(std::span<const std::optional<std::size_t>> gold_of);

}  // namespace docie::interaction
