#pragma once

// Document encoder contract, the toy contextual encoder used for tests and
// desk-scale training, and mention-candidate generation / pruning.

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "docie/autodiff.hpp"
#include "docie/corpus.hpp"
#include "docie/nn.hpp"

namespace docie::encoding {

class Vocabulary {
 public:
  static constexpr std::size_t kUnknown = 0;

  Vocabulary();
  static Vocabulary build(const std::vector<corpus::Document>& docs);

  std::size_t id(const std::string& token) const;
  std::size_t add(const std::string& token);
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in);

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Maps a document to per-token contextual vectors of width dim().
class Encoder {
 public:
  virtual ~Encoder() = default;
  // Rows = min(doc.size(), max_input_length()).
  virtual ad::Var encode(ad::Tape& tape, const corpus::Document& doc) const = 0;
  virtual Eigen::Index dim() const = 0;
  virtual std::size_t max_input_length() const = 0;
};

// Shallow contextual encoder: h_i = e_i + tanh([e_{i-1}; e_i; e_{i+1}] W + b).
// Random-initialised from the store's RNG; no dropout, so evaluation is a
// pure function of the parameters.
class WindowEncoder final : public Encoder {
 public:
  WindowEncoder(nn::ParamStore& store, const std::string& name,
                const Vocabulary& vocab, Eigen::Index dim,
                std::size_t max_input_length, std::mt19937_64& rng);

  ad::Var encode(ad::Tape& tape, const corpus::Document& doc) const override;
  Eigen::Index dim() const override { return dim_; }
  std::size_t max_input_length() const override { return max_len_; }

 private:
  const Vocabulary* vocab_;
  Eigen::Index dim_;
  std::size_t max_len_;
  nn::Param* embeddings_;  // (|V| + 1) x dim, last row is the edge pad
  nn::Linear context_;
};

// All spans of width 1..max_width inside the first `num_tokens` tokens.
// Ordered by (width, start) as enumerated; callers needing positional
// order sort explicitly.
std::vector<corpus::Span> enumerate_spans(const corpus::Document& doc,
                                          std::size_t max_width,
                                          bool cross_sentences = false,
                                          std::size_t num_tokens = SIZE_MAX);

// g = [h_start; h_end] for each span.
Matrix span_embeddings(const Matrix& token_vectors,
                       std::span<const corpus::Span> spans);
ad::Var span_embeddings(const ad::Var& token_vectors,
                        std::span<const corpus::Span> spans);

// Feed-forward s^m over span embeddings.
class MentionScorer {
 public:
  MentionScorer() = default;
  MentionScorer(nn::ParamStore& store, const std::string& name,
                Eigen::Index span_dim, Eigen::Index hidden, std::mt19937_64& rng);

  Vector score(const Matrix& span_embeddings) const;
  ad::Var score(ad::Tape& tape, const ad::Var& span_embeddings) const;

 private:
  nn::FeedForward ffnn_;
};

struct PruneOptions {
  double ratio = 0.4;    // gamma_m, fraction of token count
  std::size_t cap = 512;
};

// K = min(ceil(ratio * num_tokens), cap).
std::size_t candidate_budget(std::size_t num_tokens, const PruneOptions& opts);

// Indices into `spans` of the top-K by score (ties broken by (start, end)),
// returned in positional order. Spans listed in `forced` that fall outside
// the top-K are added, displacing the lowest-scoring unforced picks while
// the result would exceed the cap.
std::vector<std::size_t> prune_spans(std::span<const corpus::Span> spans,
                                     const Vector& scores, std::size_t num_tokens,
                                     const PruneOptions& opts,
                                     std::span<const corpus::Span> forced = {});

struct CandidateSet {
  std::vector<corpus::Span> spans;  // positional order
  Matrix embeddings;                // n x span_dim
  Vector mention_scores;            // n

  std::size_t size() const { return spans.size(); }
};

CandidateSet score_and_prune(std::span<const corpus::Span> spans,
                             const Matrix& token_vectors,
                             const MentionScorer& scorer,
                             const PruneOptions& opts);

}  // namespace docie::encoding
