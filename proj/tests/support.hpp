#pragma once

// Test-side helpers: random instances, finite-difference gradient checks and
// naive-loop oracles that share no code with the library.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "docie/autodiff.hpp"
#include "docie/corpus.hpp"
#include "docie/nn.hpp"

namespace testing_support {

using docie::Matrix;
using docie::Vector;
namespace ad = docie::ad;

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c,
                            double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

inline Vector random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  return random_matrix(rng, n, 1, scale).col(0);
}

using LossFn = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

// Largest relative error ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-6)
// over the leaf inputs and the given parameters (perturbed in place), with
// central differences of step h.
inline double gradcheck(const LossFn& f, std::vector<Matrix> inputs,
                        const std::vector<docie::nn::Param*>& params = {},
                        double h = 1e-6) {
  std::vector<Matrix> grads;
  for (const auto& m : inputs) grads.push_back(Matrix::Zero(m.rows(), m.cols()));
  for (auto* p : params) p->grad = Matrix::Zero(p->value.rows(), p->value.cols());
  {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (std::size_t i = 0; i < inputs.size(); ++i)
      leaves.push_back(tape.parameter(inputs[i], &grads[i]));
    tape.backward(f(tape, leaves));
  }
  const auto eval = [&] {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const auto& x : inputs) leaves.push_back(tape.constant(x));
    return f(tape, leaves).scalar();
  };
  double worst = 0.0;
  const auto compare = [&](Matrix& target, const Matrix& analytic) {
    Matrix numeric = Matrix::Zero(target.rows(), target.cols());
    for (Eigen::Index r = 0; r < target.rows(); ++r)
      for (Eigen::Index c = 0; c < target.cols(); ++c) {
        const double keep = target(r, c);
        target(r, c) = keep + h;
        const double up = eval();
        target(r, c) = keep - h;
        const double down = eval();
        target(r, c) = keep;
        numeric(r, c) = (up - down) / (2.0 * h);
      }
    // Floor keeps gradients that are exactly zero from comparing against noise.
    const double denom = std::max({analytic.norm(), numeric.norm(), 1e-6});
    worst = std::max(worst, (analytic - numeric).norm() / denom);
  };
  for (std::size_t i = 0; i < inputs.size(); ++i) compare(inputs[i], grads[i]);
  for (auto* p : params) {
    const Matrix analytic = p->grad;
    compare(p->value, analytic);
  }
  return worst;
}

// ---- naive oracles ----

inline double oracle_bilinear(const Vector& a, const Matrix& w, const Vector& b) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    for (Eigen::Index j = 0; j < b.size(); ++j) total += a(i) * w(i, j) * b(j);
  return total;
}

// alpha(h, t) with self excluded; a lone node gets no weights.
inline Matrix oracle_attention(const Matrix& s) {
  const Eigen::Index n = s.rows();
  Matrix a = Matrix::Zero(n, n);
  for (Eigen::Index h = 0; h < n; ++h) {
    double z = 0.0;
    for (Eigen::Index k = 0; k < n; ++k)
      if (k != h) z += std::exp(s(h, k) > 0.0 ? s(h, k) : 0.0);
    for (Eigen::Index t = 0; t < n; ++t)
      if (t != h) a(h, t) = std::exp(s(h, t) > 0.0 ? s(h, t) : 0.0) / z;
  }
  return a;
}

inline Matrix oracle_propagate(const Matrix& g, const std::vector<Matrix>& scores,
                               const std::vector<Matrix>& w) {
  const Eigen::Index n = g.rows(), d = g.cols();
  Matrix out = g;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const Matrix a = oracle_attention(scores[i]);
    for (Eigen::Index v = 0; v < n; ++v)
      for (Eigen::Index c = 0; c < d; ++c) {
        double pre = 0.0;
        for (Eigen::Index t = 0; t < n; ++t) {
          if (t == v) continue;
          double gw = 0.0;
          for (Eigen::Index k = 0; k < d; ++k) gw += g(t, k) * w[i](k, c);
          pre += a(v, t) * gw;
        }
        out(v, c) += std::tanh(pre) / static_cast<double>(scores.size());
      }
  }
  return out;
}

inline double oracle_distance(const std::vector<Matrix>& scores, std::size_t x, std::size_t y,
                              const std::vector<std::size_t>& nb,
                              const std::vector<double>& beta) {
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    for (std::size_t k : nb) {
      if (k == x || k == y) continue;
      total += beta[i] * std::fabs(scores[i](static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(k)) -
                                   scores[i](static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(k)));
    }
  return total;
}

inline double oracle_contrastive(const std::vector<double>& d, const std::vector<int>& y,
                                 double margin) {
  double total = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double di = d[i] < 0.0 ? 0.0 : d[i];
    const double gap = margin - di > 0.0 ? margin - di : 0.0;
    total += y[i] ? di * di : gap * gap;
  }
  return d.empty() ? 0.0 : total / static_cast<double>(d.size());
}

// A single-sentence document of n filler tokens.
inline docie::corpus::Document flat_document(std::size_t n, const std::string& id = "d") {
  docie::corpus::Document doc;
  doc.id = id;
  for (std::size_t i = 0; i < n; ++i)
    doc.tokens.push_back({"t" + std::to_string(i), 0, i * 3});
  return doc;
}

}  // namespace testing_support
