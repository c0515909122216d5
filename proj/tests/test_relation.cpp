#include <doctest.h>

#include <cmath>
#include <set>

#include "docie/relation.hpp"
#include "support.hpp"

using namespace docie;
using namespace docie::relation;
using corpus::Span;
using testing_support::gradcheck;
using testing_support::oracle_bilinear;
using testing_support::random_matrix;
using testing_support::random_vector;

namespace {

double lse(std::initializer_list<double> xs) {
  double z = 0.0;
  for (double x : xs) z += std::exp(x);
  return std::log(z);
}

void zero_all(nn::ParamStore& store) {
  for (auto& p : store.all()) p.value.setZero();
}

}  // namespace

TEST_CASE("relation_score examples") {
  Vector e1 = Vector::Zero(4);
  e1(0) = 1.0;
  CHECK(relation_score(e1, e1, Matrix::Zero(4, 4), 0.0, 0.0) == 0.0);
  CHECK(relation_score(e1, e1, Matrix::Identity(4, 4), 0.0, 0.0) == doctest::Approx(1.0));
  CHECK(relation_score(e1, e1, Matrix::Identity(4, 4), 0.25, 0.5) == doctest::Approx(1.75));
  CHECK_THROWS_AS(relation_score(e1, Vector::Ones(3), Matrix::Zero(4, 4), 0, 0),
                  std::invalid_argument);
}

TEST_CASE("RelationScorer structure") {
  std::mt19937_64 rng(2);
  nn::ParamStore store;
  RelationScorer scorer(store, "r", 5, 3, 8, rng);
  CHECK(scorer.num_types() == 4);
  CHECK(scorer.threshold_index() == 3);
  const Matrix heads = random_matrix(rng, 4, 5), tails = random_matrix(rng, 3, 5);

  SUBCASE("all-zero parameters score zero") {
    zero_all(store);
    for (const auto& s : scorer.score(heads, tails)) CHECK(s.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("identity form without priors is a dot product") {
    zero_all(store);
    scorer.weight(1).value.setIdentity();
    const auto s = scorer.score(heads, tails);
    for (Eigen::Index h = 0; h < 4; ++h)
      for (Eigen::Index t = 0; t < 3; ++t)
        CHECK(s[1](h, t) == doctest::Approx(heads.row(h).dot(tails.row(t))));
  }
  SUBCASE("bilinear part matches the oracle and priors are additive") {
    const auto full = scorer.score(heads, tails);
    std::vector<Matrix> saved;
    for (std::size_t i = 0; i < scorer.num_types(); ++i) {
      saved.push_back(scorer.weight(i).value);
      scorer.weight(i).value.setZero();
    }
    const auto priors = scorer.score(heads, tails);
    for (std::size_t i = 0; i < scorer.num_types(); ++i) {
      for (Eigen::Index h = 0; h < 4; ++h)
        for (Eigen::Index t = 0; t < 3; ++t) {
          const double bil = oracle_bilinear(heads.row(h).transpose(), saved[i],
                                             tails.row(t).transpose());
          CHECK(full[i](h, t) - priors[i](h, t) == doctest::Approx(bil).epsilon(1e-9));
          // prior(h) + prior(t): second differences vanish.
          CHECK(priors[i](h, t) - priors[i](0, t) - priors[i](h, 0) + priors[i](0, 0) ==
                doctest::Approx(0.0).scale(1.0));
        }
      scorer.weight(i).value = saved[i];
    }
  }
  SUBCASE("tape path and score_pair agree with the value path") {
    const auto direct = scorer.score(heads, tails);
    ad::Tape tape;
    const auto taped = scorer.score(tape, tape.constant(heads), tape.constant(tails));
    for (std::size_t i = 0; i < scorer.num_types(); ++i) {
      CHECK((taped[i].value() - direct[i]).norm() < 1e-12);
      CHECK(scorer.score_pair(heads.row(2).transpose(), tails.row(1).transpose(), i) ==
            doctest::Approx(direct[i](2, 1)));
    }
    CHECK_THROWS_AS(scorer.score_pair(heads.row(0).transpose(), tails.row(0).transpose(), 4),
                    std::out_of_range);
  }
}

TEST_CASE("transfer_labels examples") {
  std::vector<corpus::EntityCluster> gold(3);
  gold[0].mentions = {{0, 0}, {4, 4}};
  gold[1].mentions = {{2, 2}};
  gold[2].mentions = {{6, 7}};
  const std::vector<corpus::RelationTriple> triples{{0, 1, 2}, {0, 1, 0}, {1, 2, 1}};
  const std::vector<Span> cands{{0, 0}, {2, 2}, {4, 4}, {6, 7}, {9, 9}};
  const auto labels = transfer_labels(gold, triples, cands);
  CHECK(labels.at(0, 1) == std::vector<std::size_t>{0, 2});
  CHECK(labels.at(2, 1) == std::vector<std::size_t>{0, 2});
  CHECK(labels.at(1, 3) == std::vector<std::size_t>{1});
  CHECK(labels.at(1, 0).empty());
  CHECK(labels.at(0, 2).empty());  // same entity, no self relation
  CHECK(labels.at(0, 0).empty());
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(labels.at(4, i).empty());
    CHECK(labels.at(i, 4).empty());
  }
}

TEST_CASE("aggregate_entity_scores") {
  SUBCASE("two-by-one mean") {
    Matrix s = Matrix::Zero(3, 3);
    s(0, 2) = 1.0;
    s(1, 2) = 3.0;
    const std::vector<Matrix> one{s};
    const auto table = aggregate_entity_scores(one, {{0, 1}, {2}});
    CHECK(table.tables[0](0, 1) == doctest::Approx(2.0));
  }
  SUBCASE("brute force") {
    std::mt19937_64 rng(4);
    const std::vector<Matrix> s{random_matrix(rng, 6, 6), random_matrix(rng, 6, 6)};
    const coref::IndexClusters clusters{{0, 3}, {1}, {2, 4, 5}};
    const auto table = aggregate_entity_scores(s, clusters);
    REQUIRE(table.num_entities() == 3);
    for (std::size_t k = 0; k < 2; ++k)
      for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = 0; b < 3; ++b) {
          double total = 0.0;
          int count = 0;
          for (auto mh : clusters[a])
            for (auto mt : clusters[b])
              if (mh != mt) {
                total += s[k](static_cast<Eigen::Index>(mh), static_cast<Eigen::Index>(mt));
                ++count;
              }
          const double expect = count ? total / count : 0.0;
          CHECK(table.tables[k](static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) ==
                doctest::Approx(expect));
        }
  }
}

TEST_CASE("decode_relations") {
  EntityScoreTable table;
  table.tables = {Matrix::Zero(2, 2), Matrix::Zero(2, 2), Matrix::Zero(2, 2)};
  table.tables[0](0, 1) = 1.0;
  table.tables[1](0, 1) = 0.5;  // tie with TH: not emitted
  table.tables[2](0, 1) = 0.5;
  table.tables[0](0, 0) = 9.0;  // diagonal never emitted
  auto got = decode_relations(table);
  REQUIRE(got.size() == 1);
  CHECK(got[0].triple.head == 0);
  CHECK(got[0].triple.tail == 1);
  CHECK(got[0].triple.relation == 0);
  CHECK(got[0].score == doctest::Approx(0.5));

  // Invariant to a common shift of every type.
  std::mt19937_64 rng(8);
  EntityScoreTable random;
  for (int i = 0; i < 4; ++i) random.tables.push_back(random_matrix(rng, 4, 4));
  EntityScoreTable shifted = random;
  for (auto& t : shifted.tables) t.array() += 3.25;
  const auto a = decode_relations(random), b = decode_relations(shifted);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].triple == b[i].triple);
  CHECK(decode_relations(EntityScoreTable{}).empty());
}

TEST_CASE("label pairs") {
  const auto pairs = pairs_from_entity_triples(3, {{0, 2, 1}, {0, 2, 1}, {2, 0, 0}});
  CHECK(pairs.pairs.size() == 6);
  for (std::size_t i = 0; i < pairs.pairs.size(); ++i) {
    const auto [h, t] = pairs.pairs[i];
    CHECK(h != t);
    if (h == 0 && t == 2) CHECK(pairs.labels[i] == std::vector<std::size_t>{1});
    else if (h == 2 && t == 0) CHECK(pairs.labels[i] == std::vector<std::size_t>{0});
    else CHECK(pairs.labels[i].empty());
  }
  MentionLevelLabels ml(2);
  ml.at(0, 1) = {1};
  const auto mp = pairs_from_mention_labels(ml);
  CHECK(mp.pairs.size() == 2);
}

TEST_CASE("adaptive_threshold_loss hand-evaluated") {
  ad::Tape tape;
  // One pair (0, 1); |R| = 2, TH last.
  std::vector<ad::Var> s;
  const double l0 = 2.0, l1 = -1.0, lth = 0.5;
  for (double v : {l0, l1, lth}) {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 1) = v;
    s.push_back(tape.constant(m));
  }
  LabeledPairs one;
  one.pairs = {{0, 1}};
  one.labels = {{0}};
  const double expect = (lse({l0, lth}) - l0) + (lse({l1, lth}) - lth);
  CHECK(adaptive_threshold_loss(s, one).scalar() == doctest::Approx(expect).epsilon(1e-12));

  // No positives: only the TH-over-negatives term.
  LabeledPairs none;
  none.pairs = {{0, 1}};
  none.labels = {{}};
  CHECK(adaptive_threshold_loss(s, none).scalar() ==
        doctest::Approx(lse({l0, l1, lth}) - lth).epsilon(1e-12));

  // Averaged over pairs.
  LabeledPairs twice;
  twice.pairs = {{0, 1}, {0, 1}};
  twice.labels = {{0}, {}};
  CHECK(adaptive_threshold_loss(s, twice).scalar() ==
        doctest::Approx((expect + lse({l0, l1, lth}) - lth) / 2.0).epsilon(1e-12));

  LabeledPairs bad;
  bad.pairs = {{0, 1}};
  bad.labels = {{2}};
  CHECK_THROWS_AS(adaptive_threshold_loss(s, bad), std::out_of_range);
  CHECK(adaptive_threshold_loss(s, LabeledPairs{}).scalar() == 0.0);
}

TEST_CASE("relation loss gradients") {
  std::mt19937_64 rng(31);
  nn::ParamStore store;
  RelationScorer scorer(store, "r", 4, 2, 5, rng);
  MentionLevelLabels labels(4);
  labels.at(0, 1) = {0};
  labels.at(2, 3) = {0, 1};
  labels.at(3, 0) = {1};
  const auto f = [&](ad::Tape& tape, const std::vector<ad::Var>& x) {
    const auto s = scorer.score(tape, x[0], x[0]);
    return relation_loss_mention(s, labels);
  };
  std::vector<nn::Param*> params;
  for (auto& p : store.all()) params.push_back(&p);
  CHECK(gradcheck(f, {random_matrix(rng, 4, 4, 0.5)}, params) < 1e-6);
}

TEST_CASE("entity pooling and baseline") {
  const Matrix m = (Matrix(3, 2) << 0.0, 1.0, std::log(3.0), -2.0, 5.0, 5.0).finished();
  const std::vector<std::vector<std::size_t>> groups{{0, 1}, {2}};
  const Matrix pooled = pool_entities(m, groups);
  CHECK(pooled(0, 0) == doctest::Approx(std::log(4.0)));
  CHECK(pooled(0, 1) == doctest::Approx(std::log(std::exp(1.0) + std::exp(-2.0))));
  CHECK(pooled(1, 0) == doctest::Approx(5.0));
  ad::Tape tape;
  CHECK((pool_entities(tape.constant(m), groups).value() - pooled).norm() < 1e-12);
  const std::vector<std::vector<std::size_t>> empty{{}};
  CHECK_THROWS_AS(pool_entities(m, empty), std::invalid_argument);

  std::mt19937_64 rng(6);
  nn::ParamStore store;
  RelationScorer scorer(store, "r", 2, 2, 3, rng);
  const Matrix h = m.topRows(2), t = m.bottomRows(1);
  CHECK(relation_score_entity_baseline(scorer, h, t, 1) ==
        doctest::Approx(scorer.score_pair(pooled.row(0).transpose(), pooled.row(1).transpose(), 1)));
  CHECK_THROWS_AS(relation_score_entity_baseline(scorer, Matrix(0, 2), t, 0),
                  std::invalid_argument);
}
