#pragma once

// Document data model, corpus readers (DocRED, DWIE, canonical cache JSON)
// and corpus-level utilities.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace docie::corpus {

struct Token {
  std::string text;
  std::size_t sentence_index = 0;
  std::size_t document_offset = 0;

  bool operator==(const Token&) const = default;
};

// Inclusive token interval [start, end].
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t width() const { return end - start + 1; }
  auto operator<=>(const Span&) const = default;
};

struct EntityCluster {
  std::string id;
  std::vector<Span> mentions;
  // Surface string of each mention, parallel to `mentions`.
  std::vector<std::string> names;

  bool operator==(const EntityCluster&) const = default;
};

// head/tail index into Document::clusters.
struct RelationTriple {
  std::size_t head = 0;
  std::size_t tail = 0;
  std::size_t relation = 0;

  auto operator<=>(const RelationTriple&) const = default;
};

class RelationSchema {
 public:
  RelationSchema() = default;
  explicit RelationSchema(std::vector<std::string> types);

  std::size_t size() const { return types_.size(); }
  const std::string& name(std::size_t i) const { return types_.at(i); }
  std::optional<std::size_t> index_of(const std::string& name) const;
  const std::vector<std::string>& types() const { return types_; }

  bool operator==(const RelationSchema&) const = default;

 private:
  std::vector<std::string> types_;
};

struct Document {
  std::string id;
  std::vector<Token> tokens;
  std::vector<EntityCluster> clusters;
  std::vector<RelationTriple> relations;
  // Opaque per-document annotations carried through untouched (evidence,
  // split tags).
  nlohmann::json metadata = nlohmann::json::object();

  std::size_t size() const { return tokens.size(); }
  std::size_t num_sentences() const {
    return tokens.empty() ? 0 : tokens.back().sentence_index + 1;
  }
  std::string span_text(const Span& span) const;

  bool operator==(const Document&) const = default;
};

struct Corpus {
  RelationSchema schema;
  std::vector<Document> documents;
};

// Throws ValidationError when a document breaks a data-model invariant.
void validate(const Document& doc, const RelationSchema& schema);

// Sorts, deduplicates gold triples in place.
void dedupe_relations(Document& doc);

// DocRED public JSON (one split file). When `schema` is empty the schema is
// read from a sibling rel_info.json if present, otherwise collected from
// the labels in sorted order.
Corpus load_docred(const std::filesystem::path& path,
                   const std::optional<RelationSchema>& schema = std::nullopt);
Corpus parse_docred(const nlohmann::json& root, const RelationSchema& schema);
RelationSchema docred_schema_from_labels(const nlohmann::json& root);

// DWIE annotation JSON: a directory of per-document files or a single file.
// Empty entities and the relations touching them are dropped. The split tag
// ("train"/"test") is copied into metadata["split"].
Corpus load_dwie(const std::filesystem::path& path,
                 const std::optional<RelationSchema>& schema = std::nullopt);
Document parse_dwie_document(const nlohmann::json& doc,
                             const RelationSchema& schema);

// Whitespace/punctuation tokenizer with naive sentence splitting. Returned
// char offsets are [begin, end) per token.
struct TokenizedText {
  std::vector<Token> tokens;
  std::vector<std::pair<std::size_t, std::size_t>> char_spans;
};
TokenizedText tokenize(const std::string& text,
                       const std::vector<std::pair<std::size_t, std::size_t>>&
                           protected_char_spans = {});

// Canonical cache format.
nlohmann::json to_json(const Corpus& corpus);
Corpus corpus_from_json(const nlohmann::json& root);
void save_canonical(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_canonical(const std::filesystem::path& path);

struct CorpusStatistics {
  double avg_tokens = 0.0;
  double avg_entities = 0.0;
  double pct_singletons = 0.0;  // percentage in [0, 100]
};
CorpusStatistics corpus_statistics(const std::vector<Document>& docs);

struct Split {
  std::vector<Document> train;
  std::vector<Document> dev;
};
// dev receives round(fraction * N) documents (clamped to [1, N-1]) chosen
// by a seeded shuffle; both halves keep input order.
Split holdout_split(const std::vector<Document>& docs, double fraction,
                    std::uint64_t seed);

}  // namespace docie::corpus
