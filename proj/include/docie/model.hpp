#pragma once

// Composition of encoder, mention scorer, coreference and relation heads
// into the five multi-task settings. Pipeline owns two parameter stores
// (coreference model, relation model); every other setting owns one.

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "docie/config.hpp"
#include "docie/coref.hpp"
#include "docie/corpus.hpp"
#include "docie/encoding.hpp"
#include "docie/interaction.hpp"
#include "docie/metrics.hpp"
#include "docie/nn.hpp"
#include "docie/relation.hpp"

namespace docie::harness {

// Weighted loss contributions; total is their sum.
struct LossBreakdown {
  double coref = 0.0;        // antecedent marginal likelihood
  double mention = 0.0;      // mention detection BCE
  double relation = 0.0;
  double contrastive = 0.0;
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o);
  LossBreakdown scaled(double f) const;
};

// Values of one forward pass, for decoding, inspection and tests.
struct Trace {
  std::vector<corpus::Span> candidates;
  Matrix g;                         // candidate embeddings
  Vector mention_scores;
  Matrix g_hat;                     // gp only: propagated embeddings
  Matrix coref_scores;              // scores used for decoding (s~ for gc)
  std::vector<Matrix> relation_scores;  // mention-level settings, TH last
  Matrix compatibility;             // gc only: s_hat
  std::vector<std::size_t> neighbors;   // gc only
  coref::IndexClusters clusters;
};

class Model {
 public:
  Model(const SettingConfig& config, encoding::Vocabulary vocab,
        corpus::RelationSchema schema, std::uint64_t seed);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  // Builds the summed multi-task loss for one gold document on `tape`.
  ad::Var loss(ad::Tape& tape, const corpus::Document& doc,
               LossBreakdown* parts = nullptr) const;

  metrics::DocumentPrediction predict(const corpus::Document& doc) const;
  std::vector<metrics::DocumentPrediction> predict(
      const std::vector<corpus::Document>& docs) const;

  // Forward pass values. training = true applies gold-mention forcing.
  Trace trace(const corpus::Document& doc, bool training = false) const;

  const SettingConfig& config() const { return config_; }
  Setting setting() const { return config_.setting; }
  const encoding::Vocabulary& vocabulary() const { return *vocab_; }
  const corpus::RelationSchema& schema() const { return schema_; }
  std::uint64_t seed() const { return seed_; }

  // [0] is the coreference (or shared) store; pipeline adds the relation store.
  std::vector<nn::ParamStore*> stores();
  std::vector<const nn::ParamStore*> stores() const;

  interaction::CompatibilityHead* compatibility() {
    return compat_ ? &*compat_ : nullptr;
  }
  interaction::PropagationLayer* propagation() { return prop_ ? &*prop_ : nullptr; }

 private:
  struct Pass;
  Pass run(ad::Tape& tape, const corpus::Document& doc, bool training) const;

  SettingConfig config_;
  std::unique_ptr<encoding::Vocabulary> vocab_;
  corpus::RelationSchema schema_;
  std::uint64_t seed_;

  std::unique_ptr<nn::ParamStore> store_;
  std::unique_ptr<nn::ParamStore> re_store_;  // pipeline only

  std::unique_ptr<encoding::Encoder> encoder_;
  std::unique_ptr<encoding::Encoder> re_encoder_;  // pipeline only
  encoding::MentionScorer mention_scorer_;
  coref::CorefScorer coref_scorer_;
  relation::RelationScorer relation_scorer_;
  std::optional<interaction::PropagationLayer> prop_;
  std::optional<interaction::CompatibilityHead> compat_;
};

}  // namespace docie::harness
