#include "docie/interaction.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace docie::interaction {

namespace {

Matrix off_diagonal_mask(Eigen::Index n) {
  Matrix mask = Matrix::Ones(n, n);
  mask.diagonal().setZero();
  return mask;
}

double sign(double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); }

}  // namespace

Matrix propagation_attention(const Matrix& scores) {
  const Eigen::Index n = scores.rows();
  Matrix alpha = Matrix::Zero(n, n);
  for (Eigen::Index h = 0; h < n; ++h) {
    double z = 0.0;
    for (Eigen::Index t = 0; t < n; ++t)
      if (t != h) z += std::exp(std::max(scores(h, t), 0.0));
    for (Eigen::Index t = 0; t < n; ++t)
      if (t != h) alpha(h, t) = std::exp(std::max(scores(h, t), 0.0)) / z;
  }
  return alpha;
}

ad::Var propagation_attention(const ad::Var& scores) {
  return ad::masked_row_softmax(ad::relu(scores), off_diagonal_mask(scores.rows()));
}

PropagationLayer::PropagationLayer(nn::ParamStore& store, const std::string& name,
                                   Eigen::Index dim, std::size_t num_relations,
                                   bool zero_init, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < num_relations; ++i)
    transforms_.push_back(&store.create(
        name + ".transform." + std::to_string(i),
        zero_init ? Matrix::Zero(dim, dim) : nn::xavier_uniform(dim, dim, rng),
        nn::ParamGroup::kTask));
}

Matrix PropagationLayer::propagate(const Matrix& g,
                                   std::span<const Matrix> type_scores) const {
  if (type_scores.size() != transforms_.size())
    throw std::invalid_argument("propagate: expected one score matrix per type");
  Matrix messages = Matrix::Zero(g.rows(), g.cols());
  for (std::size_t i = 0; i < transforms_.size(); ++i)
    messages += (propagation_attention(type_scores[i]) * (g * transforms_[i]->value))
                    .array()
                    .tanh()
                    .matrix();
  return g + messages / static_cast<double>(transforms_.size());
}

ad::Var PropagationLayer::propagate(ad::Tape& tape, const ad::Var& g,
                                    std::span<const ad::Var> type_scores) const {
  if (type_scores.size() != transforms_.size())
    throw std::invalid_argument("propagate: expected one score matrix per type");
  ad::Var messages;
  for (std::size_t i = 0; i < transforms_.size(); ++i) {
    const ad::Var w = nn::bind(tape, *transforms_[i]);
    const ad::Var m =
        ad::tanh(ad::matmul(propagation_attention(type_scores[i]), ad::matmul(g, w)));
    messages = messages.valid() ? ad::add(messages, m) : m;
  }
  return ad::add(g, ad::scale(messages, 1.0 / static_cast<double>(transforms_.size())));
}

std::vector<std::size_t> prune_neighbors(std::span<const Matrix> type_scores,
                                         std::size_t k) {
  if (k == 0) throw std::invalid_argument("prune_neighbors: k must be >= 1");
  if (type_scores.empty()) return {};
  const Eigen::Index n = type_scores.front().rows();
  Vector saliency = Vector::Zero(n);
  for (const Matrix& s : type_scores) {
    Matrix off = s;
    off.diagonal().setZero();
    saliency += off.rowwise().sum() + off.colwise().sum().transpose();
  }
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return saliency(static_cast<Eigen::Index>(a)) > saliency(static_cast<Eigen::Index>(b));
  });
  order.resize(std::min(k, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

Matrix local_graph_distance(const Matrix& scores,
                            std::span<const std::size_t> neighbors) {
  const Eigen::Index n = scores.rows();
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index x = 0; x < n; ++x)
    for (Eigen::Index y = 0; y < n; ++y) {
      if (x == y) continue;
      double total = 0.0;
      for (std::size_t kk : neighbors) {
        const auto k = static_cast<Eigen::Index>(kk);
        if (k == x || k == y) continue;
        total += std::abs(scores(x, k) - scores(y, k));
      }
      d(x, y) = total;
    }
  return d;
}

ad::Var local_graph_distance(const ad::Var& scores,
                             std::span<const std::size_t> neighbors) {
  ad::Tape& tape = *scores.tape();
  const auto is = scores.id();
  std::vector<std::size_t> nb(neighbors.begin(), neighbors.end());
  Matrix value = local_graph_distance(scores.value(), nb);
  return tape.push(std::move(value), tape.needs_grad(is),
                   [is, nb = std::move(nb)](ad::Tape& t, std::size_t self) {
                     if (!t.needs_grad(is)) return;
                     const Matrix& s = t.value(is);
                     const Matrix& g = t.grad(self);
                     Matrix& gs = t.grad(is);
                     const Eigen::Index n = s.rows();
                     for (Eigen::Index x = 0; x < n; ++x)
                       for (Eigen::Index y = 0; y < n; ++y) {
                         if (x == y || g(x, y) == 0.0) continue;
                         for (std::size_t kk : nb) {
                           const auto k = static_cast<Eigen::Index>(kk);
                           if (k == x || k == y) continue;
                           const double dv = g(x, y) * sign(s(x, k) - s(y, k));
                           gs(x, k) += dv;
                           gs(y, k) -= dv;
                         }
                       }
                   });
}

Compatibility compatibility_distance(std::span<const Matrix> type_scores,
                                     std::size_t x, std::size_t y,
                                     std::span<const std::size_t> neighbors,
                                     std::span<const double> beta) {
  if (beta.size() != type_scores.size())
    throw std::invalid_argument("compatibility_distance: beta size");
  Compatibility out;
  const auto xi = static_cast<Eigen::Index>(x);
  const auto yi = static_cast<Eigen::Index>(y);
  for (std::size_t i = 0; i < type_scores.size(); ++i) {
    double d = 0.0;
    for (std::size_t kk : neighbors) {
      if (kk == x || kk == y) continue;
      const auto k = static_cast<Eigen::Index>(kk);
      d += std::abs(type_scores[i](xi, k) - type_scores[i](yi, k));
    }
    out.per_type.push_back(d);
    out.weighted += beta[i] * d;
  }
  return out;
}

CompatibilityHead::CompatibilityHead(nn::ParamStore& store, const std::string& name,
                                     std::size_t num_relations, bool freeze_beta) {
  if (num_relations == 0) throw std::invalid_argument("CompatibilityHead: |R| >= 1");
  beta_ = &store.create(
      name + ".beta",
      Matrix::Constant(1, static_cast<Eigen::Index>(num_relations),
                       1.0 / static_cast<double>(num_relations)),
      nn::ParamGroup::kTask);
  beta_->frozen = freeze_beta;
}

std::vector<double> CompatibilityHead::beta() const {
  return {beta_->value.data(), beta_->value.data() + beta_->value.size()};
}

Matrix CompatibilityHead::distance(std::span<const Matrix> type_scores,
                                   std::span<const std::size_t> neighbors) const {
  if (static_cast<Eigen::Index>(type_scores.size()) != beta_->value.cols())
    throw std::invalid_argument("CompatibilityHead: type count");
  const Eigen::Index n = type_scores.empty() ? 0 : type_scores.front().rows();
  Matrix out = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < type_scores.size(); ++i)
    out += beta_->value(0, static_cast<Eigen::Index>(i)) *
           local_graph_distance(type_scores[i], neighbors);
  return out;
}

ad::Var CompatibilityHead::distance(ad::Tape& tape, std::span<const ad::Var> type_scores,
                                    std::span<const std::size_t> neighbors) const {
  if (static_cast<Eigen::Index>(type_scores.size()) != beta_->value.cols())
    throw std::invalid_argument("CompatibilityHead: type count");
  const ad::Var beta = nn::bind(tape, *beta_);
  ad::Var out;
  for (std::size_t i = 0; i < type_scores.size(); ++i) {
    const ad::Var term =
        ad::scale_by(local_graph_distance(type_scores[i], neighbors),
                     ad::column(beta, static_cast<Eigen::Index>(i)));
    out = out.valid() ? ad::add(out, term) : term;
  }
  return out;
}

Matrix interpolate_coref(const Matrix& coref_scores, const Matrix& distance,
                         double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("interpolate_coref: lambda >= 0");
  return coref_scores - lambda * distance;
}

ad::Var interpolate_coref(const ad::Var& coref_scores, const ad::Var& distance,
                          double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("interpolate_coref: lambda >= 0");
  return ad::sub(coref_scores, ad::scale(distance, lambda));
}

double contrastive_term(double distance, bool same_entity, double margin) {
  if (same_entity) return distance * distance;
  const double gap = std::max(0.0, margin - distance);
  return gap * gap;
}

ad::Var contrastive_loss(const ad::Var& distances, std::span<const int> same_entity,
                         double margin) {
  ad::Tape& tape = *distances.tape();
  const auto p = static_cast<Eigen::Index>(same_entity.size());
  if (distances.rows() != p || distances.cols() != 1)
    throw std::invalid_argument("contrastive_loss: shape mismatch");
  if (p == 0) return tape.constant(Matrix::Zero(1, 1));
  Matrix y(p, 1);
  for (Eigen::Index i = 0; i < p; ++i)
    y(i, 0) = same_entity[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  const Matrix not_y = Matrix::Ones(p, 1) - y;
  const ad::Var d = ad::relu(distances);
  const ad::Var pull = ad::cwise_mul(ad::square(d), y);
  const ad::Var push =
      ad::cwise_mul(ad::square(ad::relu(ad::add_constant(ad::scale(d, -1.0), margin))),
                    not_y);
  return ad::mean(ad::add(pull, push));
}

ContrastivePairs contrastive_pairs(std::span<const std::optional<std::size_t>> gold_of) {
  ContrastivePairs out;
  for (std::size_t x = 0; x < gold_of.size(); ++x) {
    if (!gold_of[x]) continue;
    for (std::size_t y = x + 1; y < gold_of.size(); ++y) {
      if (!gold_of[y]) continue;
      out.pairs.emplace_back(x, y);
      out.same_entity.push_back(*gold_of[x] == *gold_of[y] ? 1 : 0);
    }
  }
  return out;
}

}  // namespace docie::interaction
