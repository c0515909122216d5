#include "docie/synthetic.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace docie::synthetic {

namespace {

using corpus::Document;
using corpus::Span;

std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::vector<std::string> name_tokens(std::size_t kind, std::size_t j, std::size_t singles) {
  const std::string k = "k" + std::to_string(kind);
  if (j < singles) return {k + "n" + std::to_string(j)};
  const std::string i = std::to_string(j - singles);
  return {k + "p" + i, k + "q" + i};
}

Document make_document(const ToyOptions& o, std::size_t index, std::mt19937_64& rng) {
  const std::size_t r = o.num_relations;
  for (;;) {
    const std::size_t n_entities = uniform(rng, o.min_entities, o.max_entities);
    const std::size_t first_kind = uniform(rng, 0, r - 1);
    std::vector<std::size_t> kinds, names;
    std::vector<std::size_t> order;  // entity index per mention slot
    for (std::size_t e = 0; e < n_entities; ++e) {
      kinds.push_back((first_kind + e) % r);
      names.push_back(uniform(rng, 0, 2 * o.names_per_kind - 1));
      const std::size_t m = uniform(rng, 1, o.max_mentions);
      order.insert(order.end(), m, e);
    }
    std::shuffle(order.begin(), order.end(), rng);

    Document doc;
    doc.id = "toy-" + std::to_string(index);
    doc.clusters.resize(n_entities);
    std::size_t sentence = 0, offset = 0;
    const auto emit = [&](const std::string& text) {
      doc.tokens.push_back({text, sentence, offset});
      offset += text.size() + 1;
    };
    const auto filler = [&] { emit("w" + std::to_string(uniform(rng, 0, o.filler_words - 1))); };
    for (std::size_t i = 0; i < order.size(); ++i) {
      const std::size_t e = order[i];
      for (std::size_t f = uniform(rng, 1, 2); f > 0; --f) filler();
      const auto tokens = name_tokens(kinds[e], names[e], o.names_per_kind);
      const Span span{doc.tokens.size(), doc.tokens.size() + tokens.size() - 1};
      std::string surface;
      for (const auto& t : tokens) {
        surface += (surface.empty() ? "" : " ") + t;
        emit(t);
      }
      doc.clusters[e].mentions.push_back(span);
      doc.clusters[e].names.push_back(surface);
      if (i + 1 == order.size() || uniform(rng, 0, 1) == 1) {
        if (uniform(rng, 0, 1) == 1) filler();
        emit(".");
        ++sentence;
      }
    }
    if (doc.tokens.size() > o.max_tokens) continue;

    for (std::size_t e = 0; e < n_entities; ++e)
      doc.clusters[e].id = doc.id + "-e" + std::to_string(e);
    for (std::size_t h = 0; h < n_entities; ++h)
      for (std::size_t t = 0; t < n_entities; ++t)
        if (h != t && kinds[t] == (kinds[h] + 1) % r) doc.relations.push_back({h, t, kinds[h]});
    corpus::dedupe_relations(doc);
    return doc;
  }
}

}  // namespace

corpus::Corpus generate(const ToyOptions& options) {
  if (options.num_relations < 2) throw std::invalid_argument("toy corpus: |R| >= 2");
  if (options.min_entities < 2 || options.min_entities > options.max_entities ||
      options.max_entities > options.num_relations)
    throw std::invalid_argument("toy corpus: need 2 <= min_entities <= max_entities <= |R|");
  if (options.max_mentions == 0 || options.names_per_kind == 0 || options.filler_words == 0)
    throw std::invalid_argument("toy corpus: counts must be >= 1");
  if (options.max_tokens < 3 * options.max_entities * options.max_mentions)
    throw std::invalid_argument("toy corpus: max_tokens too small for the mention budget");

  std::vector<std::string> types;
  for (std::size_t i = 0; i < options.num_relations; ++i) types.push_back("r" + std::to_string(i));
  corpus::Corpus out{corpus::RelationSchema(types), {}};
  std::mt19937_64 rng(options.seed);
  for (std::size_t i = 0; i < options.documents; ++i) {
    out.documents.push_back(make_document(options, i, rng));
    corpus::validate(out.documents.back(), out.schema);
  }
  return out;
}

}  // namespace docie::synthetic
