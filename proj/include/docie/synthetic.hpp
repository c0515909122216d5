#pragma once

// Seeded generator for small planted corpora used by tests, the acceptance
// suite and `docie toy`.
//
// Every entity has a "kind" in [0, |R|) carried by its name tokens. Kinds in
// a document form a chain k, k+1, ... (mod |R|), and relation r_k holds from
// each kind-k entity to each kind-(k+1) entity. All mentions of an entity
// share one surface string, so coreferent mentions carry identical relation
// contexts.

#include <cstdint>

#include "docie/corpus.hpp"

namespace docie::synthetic {

struct ToyOptions {
  std::size_t documents = 20;
  std::size_t max_tokens = 60;
  std::size_t num_relations = 4;
  std::size_t min_entities = 3;
  std::size_t max_entities = 4;   // <= num_relations
  std::size_t max_mentions = 3;   // per entity
  std::size_t names_per_kind = 6; // single-token names; as many two-token ones
  std::size_t filler_words = 60;
  std::uint64_t seed = 7;
};

corpus::Corpus generate(const ToyOptions& options);

}  // namespace docie::synthetic
