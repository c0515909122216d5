#include "docie/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>

namespace docie::encoding {

using corpus::Span;

Vocabulary::Vocabulary() { add("<unk>"); }

Vocabulary Vocabulary::build(const std::vector<corpus::Document>& docs) {
  Vocabulary v;
  for (const auto& doc : docs)
    for (const auto& tok : doc.tokens) v.add(tok.text);
  return v;
}

std::size_t Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnknown : it->second;
}

std::size_t Vocabulary::add(const std::string& token) {
  auto [it, inserted] = index_.try_emplace(token, words_.size());
  if (inserted) words_.push_back(token);
  return it->second;
}

void Vocabulary::save(std::ostream& out) const {
  nn::write_pod<std::uint64_t>(out, words_.size());
  for (const auto& w : words_) nn::write_string(out, w);
}

Vocabulary Vocabulary::load(std::istream& in) {
  Vocabulary v;
  v.words_.clear();
  v.index_.clear();
  const auto n = nn::read_pod<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n; ++i) v.add(nn::read_string(in));
  return v;
}

WindowEncoder::WindowEncoder(nn::ParamStore& store, const std::string& name,
                             const Vocabulary& vocab, Eigen::Index dim,
                             std::size_t max_input_length, std::mt19937_64& rng)
    : vocab_(&vocab), dim_(dim), max_len_(max_input_length) {
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  Matrix table(static_cast<Eigen::Index>(vocab.size()) + 1, dim);
  for (Eigen::Index i = 0; i < table.size(); ++i) table.data()[i] = normal(rng);
  table.row(table.rows() - 1).setZero();
  embeddings_ = &store.create(name + ".embeddings", std::move(table),
                              nn::ParamGroup::kEncoder);
  context_ = nn::Linear(store, name + ".context", 3 * dim, dim,
                        nn::ParamGroup::kEncoder, rng);
}

ad::Var WindowEncoder::encode(ad::Tape& tape, const corpus::Document& doc) const {
  const std::size_t n = std::min(doc.size(), max_len_);
  const std::size_t pad = vocab_->size();
  std::vector<std::size_t> ids(n), left(n), right(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = vocab_->id(doc.tokens[i].text);
  for (std::size_t i = 0; i < n; ++i) {
    left[i] = i == 0 ? pad : ids[i - 1];
    right[i] = i + 1 == n ? pad : ids[i + 1];
  }
  const ad::Var table = nn::bind(tape, *embeddings_);
  const ad::Var center = ad::gather_rows(table, ids);
  const ad::Var parts[] = {ad::gather_rows(table, left), center,
                           ad::gather_rows(table, right)};
  const ad::Var window = ad::concat_cols(std::span<const ad::Var>(parts));
  return ad::add(center, ad::tanh(context_.forward(tape, window)));
}

std::vector<Span> enumerate_spans(const corpus::Document& doc,
                                  std::size_t max_width, bool cross_sentences,
                                  std::size_t num_tokens) {
  if (max_width == 0) throw std::invalid_argument("enumerate_spans: max_width >= 1");
  const std::size_t n = std::min(num_tokens, doc.size());
  std::vector<Span> out;
  for (std::size_t w = 1; w <= max_width; ++w)
    for (std::size_t s = 0; s + w <= n; ++s) {
      const std::size_t e = s + w - 1;
      if (!cross_sentences &&
          doc.tokens[s].sentence_index != doc.tokens[e].sentence_index)
        continue;
      out.push_back(Span{s, e});
    }
  return out;
}

Matrix span_embeddings(const Matrix& token_vectors, std::span<const Span> spans) {
  const Eigen::Index d = token_vectors.cols();
  Matrix g(static_cast<Eigen::Index>(spans.size()), 2 * d);
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    g.row(r).head(d) = token_vectors.row(static_cast<Eigen::Index>(spans[i].start));
    g.row(r).tail(d) = token_vectors.row(static_cast<Eigen::Index>(spans[i].end));
  }
  return g;
}

ad::Var span_embeddings(const ad::Var& token_vectors,
                        std::span<const Span> spans) {
  std::vector<std::size_t> starts, ends;
  starts.reserve(spans.size());
  ends.reserve(spans.size());
  for (const auto& s : spans) {
    starts.push_back(s.start);
    ends.push_back(s.end);
  }
  return ad::concat_cols(ad::gather_rows(token_vectors, starts),
                         ad::gather_rows(token_vectors, ends));
}

MentionScorer::MentionScorer(nn::ParamStore& store, const std::string& name,
                             Eigen::Index span_dim, Eigen::Index hidden,
                             std::mt19937_64& rng)
    : ffnn_(store, name, span_dim, hidden, 1, nn::ParamGroup::kTask, rng) {}

Vector MentionScorer::score(const Matrix& g) const { return ffnn_.apply(g).col(0); }

ad::Var MentionScorer::score(ad::Tape& tape, const ad::Var& g) const {
  return ffnn_.forward(tape, g);
}

std::size_t candidate_budget(std::size_t num_tokens, const PruneOptions& opts) {
  const auto k = static_cast<std::size_t>(
      std::ceil(opts.ratio * static_cast<double>(num_tokens) - 1e-9));
  return std::min(k, opts.cap);
}

std::vector<std::size_t> prune_spans(std::span<const Span> spans,
                                     const Vector& scores, std::size_t num_tokens,
                                     const PruneOptions& opts,
                                     std::span<const Span> forced) {
  if (static_cast<std::size_t>(scores.size()) != spans.size())
    throw std::invalid_argument("prune_spans: score/span count mismatch");
  std::vector<std::size_t> order(spans.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = scores(static_cast<Eigen::Index>(a));
    const double sb = scores(static_cast<Eigen::Index>(b));
    if (sa != sb) return sa > sb;
    return spans[a] < spans[b];
  });
  const std::size_t k = std::min(candidate_budget(num_tokens, opts), spans.size());
  std::vector<std::size_t> kept(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));

  if (!forced.empty()) {
    const std::set<Span> forced_set(forced.begin(), forced.end());
    std::set<std::size_t> kept_set(kept.begin(), kept.end());
    std::vector<std::size_t> extra;
    for (std::size_t i = 0; i < spans.size(); ++i)
      if (forced_set.count(spans[i]) && !kept_set.count(i)) extra.push_back(i);
    // kept is in descending score order; evict from the tail.
    std::size_t total = kept.size() + extra.size();
    for (std::size_t pos = kept.size(); pos-- > 0 && total > opts.cap;) {
      if (forced_set.count(spans[kept[pos]])) continue;
      kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(pos));
      --total;
    }
    kept.insert(kept.end(), extra.begin(), extra.end());
  }
  std::sort(kept.begin(), kept.end(),
            [&](std::size_t a, std::size_t b) { return spans[a] < spans[b]; });
  return kept;
}

CandidateSet score_and_prune(std::span<const Span> spans,
                             const Matrix& token_vectors,
                             const MentionScorer& scorer,
                             const PruneOptions& opts) {
  const Matrix all = span_embeddings(token_vectors, spans);
  const Vector scores = scorer.score(all);
  const auto kept = prune_spans(spans, scores, static_cast<std::size_t>(token_vectors.rows()), opts);
  CandidateSet out;
  out.embeddings.resize(static_cast<Eigen::Index>(kept.size()), all.cols());
  out.mention_scores.resize(static_cast<Eigen::Index>(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    out.spans.push_back(spans[kept[i]]);
    out.embeddings.row(static_cast<Eigen::Index>(i)) =
        all.row(static_cast<Eigen::Index>(kept[i]));
    out.mention_scores(static_cast<Eigen::Index>(i)) =
        scores(static_cast<Eigen::Index>(kept[i]));
  }
  return out;
}

}  // namespace docie::encoding
