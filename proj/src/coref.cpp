#include "docie/coref.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>

namespace docie::coref {

double coref_score(const Vector& g_x, const Vector& g_y, const Matrix& weight,
                   double mention_x, double mention_y) {
  if (g_x.size() != weight.rows() || g_y.size() != weight.cols())
    throw std::invalid_argument("coref_score: dimension mismatch");
  return g_x.dot(weight * g_y) + mention_x + mention_y;
}

CorefScorer::CorefScorer(nn::ParamStore& store, const std::string& name,
                         Eigen::Index dim, std::mt19937_64& rng)
    : weight_(&store.create(name + ".bilinear", nn::xavier_uniform(dim, dim, rng),
                            nn::ParamGroup::kTask)) {}

Matrix CorefScorer::score(const Matrix& g, const Vector& mention_scores) const {
  Matrix s = g * weight_->value * g.transpose();
  s.colwise() += mention_scores;
  s.rowwise() += mention_scores.transpose();
  return s;
}

ad::Var CorefScorer::score(ad::Tape& tape, const ad::Var& g,
                           const ad::Var& mention_scores) const {
  const ad::Var w = nn::bind(tape, *weight_);
  return ad::add_outer(ad::matmul_nt(ad::matmul(g, w), g), mention_scores,
                       mention_scores);
}

namespace {

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

IndexClusters decode_clusters(const Matrix& scores, const Vector& mention_scores) {
  const auto n = static_cast<std::size_t>(mention_scores.size());
  if (static_cast<std::size_t>(scores.rows()) != n ||
      static_cast<std::size_t>(scores.cols()) != n)
    throw std::invalid_argument("decode_clusters: score shape");
  UnionFind uf(n);
  std::vector<bool> linked(n, false);
  for (std::size_t y = 1; y < n; ++y) {
    std::size_t best = 0;
    double best_score = scores(0, static_cast<Eigen::Index>(y));
    for (std::size_t x = 1; x < y; ++x) {
      const double s = scores(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
      if (s > best_score) {
        best_score = s;
        best = x;
      }
    }
    if (best_score > 0.0) {
      uf.unite(best, y);
      linked[best] = linked[y] = true;
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) {
    if (!linked[i] && !(mention_scores(static_cast<Eigen::Index>(i)) > 0.0)) continue;
    groups[uf.find(i)].push_back(i);
  }
  IndexClusters out;
  for (auto& [root, members] : groups) out.push_back(std::move(members));
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return out;
}

std::vector<corpus::EntityCluster> to_entity_clusters(
    const IndexClusters& clusters, std::span<const corpus::Span> spans,
    const corpus::Document* doc) {
  std::vector<corpus::EntityCluster> out;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    corpus::EntityCluster cluster;
    cluster.id = "pred" + std::to_string(c);
    for (std::size_t idx : clusters[c]) {
      cluster.mentions.push_back(spans[idx]);
      cluster.names.push_back(doc ? doc->span_text(spans[idx]) : std::string{});
    }
    out.push_back(std::move(cluster));
  }
  return out;
}

std::vector<std::optional<std::size_t>> align_to_gold(
    std::span<const corpus::Span> spans,
    const std::vector<corpus::EntityCluster>& gold) {
  std::map<corpus::Span, std::size_t> owner;
  for (std::size_t c = 0; c < gold.size(); ++c)
    for (const auto& m : gold[c].mentions) owner.emplace(m, c);
  std::vector<std::optional<std::size_t>> out;
  out.reserve(spans.size());
  for (const auto& s : spans) {
    auto it = owner.find(s);
    out.push_back(it == owner.end() ? std::nullopt
                                    : std::optional<std::size_t>(it->second));
  }
  return out;
}

CorefLossParts coref_loss(const ad::Var& scores, const ad::Var& mention_scores,
                          std::span<const std::optional<std::size_t>> gold_of,
                          double mention_weight) {
  ad::Tape& tape = *scores.tape();
  const auto n = static_cast<Eigen::Index>(gold_of.size());
  if (scores.rows() != n || scores.cols() != n || mention_scores.rows() != n)
    throw std::invalid_argument("coref_loss: shape mismatch");

  // Row y holds [dummy, s(0, y), ..., s(n-1, y)].
  const ad::Var dummy = tape.constant(Matrix::Zero(n, 1));
  const ad::Var by_anaphor = ad::concat_cols(dummy, ad::transpose(scores));
  Matrix all = Matrix::Zero(n, n + 1);
  Matrix gold = Matrix::Zero(n, n + 1);
  Matrix is_mention = Matrix::Zero(n, 1);
  for (Eigen::Index y = 0; y < n; ++y) {
    all(y, 0) = 1.0;
    const auto& gy = gold_of[static_cast<std::size_t>(y)];
    if (gy) is_mention(y, 0) = 1.0;
    bool has_gold_antecedent = false;
    for (Eigen::Index x = 0; x < y; ++x) {
      all(y, x + 1) = 1.0;
      const auto& gx = gold_of[static_cast<std::size_t>(x)];
      if (gy && gx && *gx == *gy) {
        gold(y, x + 1) = 1.0;
        has_gold_antecedent = true;
      }
    }
    if (!has_gold_antecedent) gold(y, 0) = 1.0;
  }
  CorefLossParts parts;
  if (n == 0) {
    parts.antecedent = tape.constant(Matrix::Zero(1, 1));
    parts.mention = tape.constant(Matrix::Zero(1, 1));
    parts.total = parts.antecedent;
    return parts;
  }
  parts.antecedent = ad::sum(ad::sub(ad::masked_row_logsumexp(by_anaphor, all),
                                     ad::masked_row_logsumexp(by_anaphor, gold)));
  parts.mention = ad::bce_with_logits(mention_scores, is_mention);
  parts.total = ad::add(parts.antecedent, ad::scale(parts.mention, mention_weight));
  return parts;
}

}  // namespace docie::coref
