#include <doctest.h>

#include <cmath>
#include <set>

#include "docie/coref.hpp"
#include "support.hpp"

using namespace docie;
using namespace docie::coref;
using testing_support::gradcheck;
using testing_support::oracle_bilinear;
using testing_support::random_matrix;
using testing_support::random_vector;

namespace {

double softplus(double x) { return std::log1p(std::exp(x)); }

// Naive union-find decode used as an oracle.
IndexClusters oracle_decode(const Matrix& s, const Vector& sm) {
  const std::size_t n = static_cast<std::size_t>(sm.size());
  std::vector<std::size_t> label(n);
  for (std::size_t i = 0; i < n; ++i) label[i] = i;
  std::vector<bool> linked(n, false);
  for (std::size_t y = 0; y < n; ++y) {
    int best = -1;
    double best_s = 0.0;
    for (std::size_t x = 0; x < y; ++x) {
      const double v = s(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
      if (v > 0.0 && (best < 0 || v > best_s)) {
        best = static_cast<int>(x);
        best_s = v;
      }
    }
    if (best < 0) continue;
    linked[y] = linked[static_cast<std::size_t>(best)] = true;
    const std::size_t from = label[y], to = label[static_cast<std::size_t>(best)];
    for (auto& l : label)
      if (l == from) l = to;
  }
  std::vector<std::vector<std::size_t>> by_label(n);
  for (std::size_t i = 0; i < n; ++i)
    if (linked[i] || sm(static_cast<Eigen::Index>(i)) > 0.0) by_label[label[i]].push_back(i);
  IndexClusters out;
  for (auto& g : by_label)
    if (!g.empty()) out.push_back(g);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("coref_score examples") {
  const Vector g = Vector::Ones(3);
  CHECK(coref_score(g, g, Matrix::Zero(3, 3), 0.0, 0.0) == 0.0);
  Vector e1 = Vector::Zero(3);
  e1(0) = 1.0;
  CHECK(coref_score(e1, e1, Matrix::Identity(3, 3), 0.0, 0.0) == doctest::Approx(1.0));
  CHECK(coref_score(e1, e1, Matrix::Identity(3, 3), 0.5, -2.0) == doctest::Approx(-0.5));
  CHECK_THROWS_AS(coref_score(g, Vector::Ones(2), Matrix::Zero(3, 3), 0, 0),
                  std::invalid_argument);
}

TEST_CASE("coref_score matches the naive oracle") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector a = random_vector(rng, 6), b = random_vector(rng, 6);
    const Matrix w = random_matrix(rng, 6, 6);
    const double mx = random_vector(rng, 1)(0), my = random_vector(rng, 1)(0);
    CHECK(coref_score(a, b, w, mx, my) ==
          doctest::Approx(oracle_bilinear(a, w, b) + mx + my).epsilon(1e-9));
  }
}

TEST_CASE("CorefScorer value and tape paths agree") {
  std::mt19937_64 rng(3);
  nn::ParamStore store;
  CorefScorer scorer(store, "c", 4, rng);
  const Matrix g = random_matrix(rng, 5, 4);
  const Vector sm = random_vector(rng, 5);
  const Matrix direct = scorer.score(g, sm);
  for (Eigen::Index x = 0; x < 5; ++x)
    for (Eigen::Index y = 0; y < 5; ++y)
      CHECK(direct(x, y) == doctest::Approx(coref_score(g.row(x).transpose(), g.row(y).transpose(),
                                                        scorer.weight().value, sm(x), sm(y))));
  ad::Tape tape;
  const Matrix taped = scorer.score(tape, tape.constant(g), tape.constant(sm)).value();
  CHECK((taped - direct).norm() < 1e-12);
}

TEST_CASE("shifting mention scores shifts pair scores by twice the shift") {
  std::mt19937_64 rng(5);
  nn::ParamStore store;
  CorefScorer scorer(store, "c", 3, rng);
  const Matrix g = random_matrix(rng, 4, 3);
  const Vector sm = random_vector(rng, 4);
  const Matrix diff = scorer.score(g, (sm.array() + 0.7).matrix()) - scorer.score(g, sm);
  CHECK((diff.array() - 1.4).abs().maxCoeff() < 1e-12);
}

TEST_CASE("decode_clusters examples") {
  SUBCASE("no links keeps positive-mention singletons") {
    const Matrix s = Matrix::Constant(3, 3, -1.0);
    Vector sm(3);
    sm << 1.0, -1.0, 0.5;
    CHECK(decode_clusters(s, sm) == IndexClusters{{0}, {2}});
  }
  SUBCASE("one pair") {
    Matrix s = Matrix::Constant(3, 3, -1.0);
    s(0, 2) = 2.0;
    const Vector sm = Vector::Constant(3, -1.0);
    CHECK(decode_clusters(s, sm) == IndexClusters{{0, 2}});
  }
  SUBCASE("chain closes transitively") {
    Matrix s = Matrix::Constant(4, 4, -1.0);
    s(0, 1) = 1.0;
    s(1, 3) = 1.0;
    const Vector sm = Vector::Constant(4, -1.0);
    CHECK(decode_clusters(s, sm) == IndexClusters{{0, 1, 3}});
  }
  SUBCASE("ties go to the earliest antecedent") {
    Matrix s = Matrix::Constant(3, 3, -1.0);
    s(0, 2) = s(1, 2) = 1.0;
    const Vector sm = Vector::Constant(3, 1.0);
    CHECK(decode_clusters(s, sm) == IndexClusters{{0, 2}, {1}});
  }
  SUBCASE("zero is not a link") {
    const Matrix s = Matrix::Zero(2, 2);
    CHECK(decode_clusters(s, Vector::Constant(2, -1.0)).empty());
  }
  CHECK(decode_clusters(Matrix(0, 0), Vector(0)).empty());
  CHECK_THROWS_AS(decode_clusters(Matrix::Zero(2, 3), Vector::Zero(2)), std::invalid_argument);
}

TEST_CASE("decode_clusters matches the union-find oracle and partitions") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng() % 9);
    const Matrix s = random_matrix(rng, n, n);
    const Vector sm = random_vector(rng, n);
    const auto got = decode_clusters(s, sm);
    CHECK(got == oracle_decode(s, sm));
    std::set<std::size_t> seen;
    for (const auto& c : got) {
      CHECK(std::is_sorted(c.begin(), c.end()));
      for (auto i : c) CHECK(seen.insert(i).second);
    }
  }
}

TEST_CASE("to_entity_clusters and align_to_gold") {
  const std::vector<corpus::Span> spans{{0, 0}, {2, 3}, {5, 5}};
  const auto clusters = to_entity_clusters({{0, 2}, {1}}, spans);
  REQUIRE(clusters.size() == 2);
  CHECK(clusters[0].mentions == std::vector<corpus::Span>{{0, 0}, {5, 5}});
  CHECK(clusters[1].mentions == std::vector<corpus::Span>{{2, 3}});

  std::vector<corpus::EntityCluster> gold(2);
  gold[0].mentions = {{5, 5}};
  gold[1].mentions = {{0, 0}, {2, 2}};
  const auto aligned = align_to_gold(spans, gold);
  CHECK(aligned[0] == std::optional<std::size_t>(1));
  CHECK_FALSE(aligned[1].has_value());
  CHECK(aligned[2] == std::optional<std::size_t>(0));
}

TEST_CASE("coref_loss examples") {
  SUBCASE("no gold mentions and confident negatives cost nothing") {
    ad::Tape tape;
    const Matrix s = Matrix::Constant(3, 3, -60.0);
    const Matrix sm = Matrix::Constant(3, 1, -60.0);
    const std::vector<std::optional<std::size_t>> gold(3);
    const auto parts = coref_loss(tape.constant(s), tape.constant(sm), gold);
    CHECK(parts.total.scalar() < 1e-20);
  }
  SUBCASE("a gold singleton with all mass on the dummy") {
    ad::Tape tape;
    const Matrix s = Matrix::Constant(2, 2, -60.0);
    const Matrix sm = Matrix::Constant(2, 1, 0.0);
    const std::vector<std::optional<std::size_t>> gold{0, 1};
    const auto parts = coref_loss(tape.constant(s), tape.constant(sm), gold);
    CHECK(parts.antecedent.scalar() < 1e-20);
    CHECK(parts.mention.scalar() == doctest::Approx(2.0 * std::log(2.0)));
  }
  SUBCASE("hand-computed three candidates") {
    const double a = 0.3, b = 1.2, c = -0.4;
    const double m0 = 0.5, m1 = -1.0, m2 = 2.0;
    Matrix s = Matrix::Zero(3, 3);
    s(0, 1) = a;
    s(0, 2) = b;
    s(1, 2) = c;
    Matrix sm(3, 1);
    sm << m0, m1, m2;
    const std::vector<std::optional<std::size_t>> gold{0, std::nullopt, 0};
    ad::Tape tape;
    const auto parts = coref_loss(tape.constant(s), tape.constant(sm), gold, 0.5);
    const double ant = std::log(1.0 + std::exp(a)) +
                       (std::log(1.0 + std::exp(b) + std::exp(c)) - b);
    const double men = softplus(-m0) + softplus(m1) + softplus(-m2);
    CHECK(parts.antecedent.scalar() == doctest::Approx(ant).epsilon(1e-12));
    CHECK(parts.mention.scalar() == doctest::Approx(men).epsilon(1e-12));
    CHECK(parts.total.scalar() == doctest::Approx(ant + 0.5 * men).epsilon(1e-12));
    // Frozen value of the same instance.
    CHECK(parts.antecedent.scalar() == doctest::Approx(1.2618787193).epsilon(1e-9));
  }
  SUBCASE("empty input") {
    ad::Tape tape;
    const auto parts = coref_loss(tape.constant(Matrix(0, 0)), tape.constant(Matrix(0, 1)), {});
    CHECK(parts.total.scalar() == 0.0);
  }
  SUBCASE("shape mismatch throws") {
    ad::Tape tape;
    const std::vector<std::optional<std::size_t>> gold(2);
    CHECK_THROWS_AS(coref_loss(tape.constant(Matrix::Zero(3, 3)),
                               tape.constant(Matrix::Zero(3, 1)), gold),
                    std::invalid_argument);
  }
}

TEST_CASE("coref_loss gradients through the scorer") {
  std::mt19937_64 rng(23);
  nn::ParamStore store;
  CorefScorer scorer(store, "c", 4, rng);
  const std::vector<std::optional<std::size_t>> gold{0, std::nullopt, 0, 1, 1};
  const auto f = [&](ad::Tape& tape, const std::vector<ad::Var>& x) {
    return coref_loss(scorer.score(tape, x[0], x[1]), x[1], gold).total;
  };
  const double err = gradcheck(f, {random_matrix(rng, 5, 4, 0.5), random_matrix(rng, 5, 1)},
                               {&scorer.weight()});
  CHECK(err < 1e-6);
}
