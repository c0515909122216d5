#include "docie/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "docie/error.hpp"

namespace docie::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

RelationSchema::RelationSchema(std::vector<std::string> types)
    : types_(std::move(types)) {
  if (types_.empty()) throw ValidationError("relation schema must not be empty");
  std::set<std::string> seen;
  for (const auto& t : types_)
    if (!seen.insert(t).second)
      throw ValidationError("duplicate relation type '" + t + "'");
}

std::optional<std::size_t> RelationSchema::index_of(
    const std::string& name) const {
  auto it = std::find(types_.begin(), types_.end(), name);
  if (it == types_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - types_.begin());
}

std::string Document::span_text(const Span& span) const {
  std::string out;
  for (std::size_t i = span.start; i <= span.end && i < tokens.size(); ++i) {
    if (!out.empty()) out += ' ';
    out += tokens[i].text;
  }
  return out;
}

void validate(const Document& doc, const RelationSchema& schema) {
  const auto fail = [&](const std::string& what) {
    throw ValidationError("document '" + doc.id + "': " + what);
  };
  for (std::size_t i = 1; i < doc.tokens.size(); ++i) {
    if (doc.tokens[i].document_offset <= doc.tokens[i - 1].document_offset)
      fail("token offsets not strictly increasing");
    if (doc.tokens[i].sentence_index < doc.tokens[i - 1].sentence_index)
      fail("sentence indices decreasing");
  }
  std::set<Span> all_mentions;
  for (const auto& cluster : doc.clusters) {
    if (cluster.mentions.empty()) fail("cluster '" + cluster.id + "' is empty");
    if (cluster.names.size() != cluster.mentions.size())
      fail("cluster '" + cluster.id + "' names/mentions size mismatch");
    std::set<Span> own;
    for (const auto& m : cluster.mentions) {
      if (m.start > m.end || m.end >= doc.tokens.size())
        fail("mention [" + std::to_string(m.start) + ", " +
             std::to_string(m.end) + "] out of bounds");
      if (!own.insert(m).second)
        fail("duplicate mention in cluster '" + cluster.id + "'");
      if (!all_mentions.insert(m).second)
        fail("mention shared by two clusters");
    }
  }
  for (const auto& r : doc.relations) {
    if (r.head >= doc.clusters.size() || r.tail >= doc.clusters.size())
      fail("relation references missing cluster");
    if (r.head == r.tail) fail("self relation");
    if (r.relation >= schema.size()) fail("relation index out of schema");
  }
}

void dedupe_relations(Document& doc) {
  std::sort(doc.relations.begin(), doc.relations.end());
  doc.relations.erase(std::unique(doc.relations.begin(), doc.relations.end()),
                      doc.relations.end());
}

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// Removes spans already owned by an earlier cluster (or repeated within the
// same cluster), keeping the first occurrence.
void drop_repeated_mentions(std::vector<EntityCluster>& clusters) {
  std::set<Span> seen;
  for (auto& c : clusters) {
    EntityCluster kept{c.id, {}, {}};
    for (std::size_t i = 0; i < c.mentions.size(); ++i) {
      if (!seen.insert(c.mentions[i]).second) continue;
      kept.mentions.push_back(c.mentions[i]);
      kept.names.push_back(c.names[i]);
    }
    if (!kept.mentions.empty() || c.mentions.empty()) c = std::move(kept);
  }
}

}  // namespace

RelationSchema docred_schema_from_labels(const json& root) {
  std::set<std::string> names;
  for (const auto& doc : root)
    if (doc.contains("labels"))
      for (const auto& l : doc.at("labels")) names.insert(l.at("r").get<std::string>());
  return RelationSchema(std::vector<std::string>(names.begin(), names.end()));
}

Corpus parse_docred(const json& root, const RelationSchema& schema) {
  if (!root.is_array()) throw ParseError("DocRED root must be an array");
  Corpus corpus;
  corpus.schema = schema;
  std::size_t index = 0;
  for (const auto& raw : root) {
    Document doc;
    doc.id = raw.value("title", "doc" + std::to_string(index));
    ++index;
    try {
      std::vector<std::size_t> sent_start;
      std::vector<std::size_t> sent_len;
      for (const auto& sent : raw.at("sents")) {
        sent_start.push_back(doc.tokens.size());
        sent_len.push_back(sent.size());
        for (const auto& tok : sent)
          doc.tokens.push_back(Token{tok.get<std::string>(), sent_start.size() - 1,
                                     doc.tokens.size()});
      }
      std::size_t cluster_index = 0;
      for (const auto& vertex : raw.at("vertexSet")) {
        EntityCluster cluster;
        cluster.id = std::to_string(cluster_index++);
        for (const auto& m : vertex) {
          const auto sid = m.at("sent_id").get<std::size_t>();
          const auto& pos = m.at("pos");
          const auto b = pos.at(0).get<std::size_t>();
          const auto e = pos.at(1).get<std::size_t>();
          if (sid >= sent_start.size() || e <= b || e > sent_len[sid])
            throw ValidationError("document '" + doc.id +
                                  "': mention index out of range");
          cluster.mentions.push_back(Span{sent_start[sid] + b, sent_start[sid] + e - 1});
          cluster.names.push_back(m.value("name", std::string{}));
        }
        doc.clusters.push_back(std::move(cluster));
      }
      drop_repeated_mentions(doc.clusters);
      json evidence = json::array();
      if (raw.contains("labels")) {
        for (const auto& l : raw.at("labels")) {
          const auto rel_name = l.at("r").get<std::string>();
          const auto rel = schema.index_of(rel_name);
          if (!rel)
            throw ValidationError("document '" + doc.id +
                                  "': unknown relation '" + rel_name + "'");
          RelationTriple t{l.at("h").get<std::size_t>(), l.at("t").get<std::size_t>(),
                           *rel};
          doc.relations.push_back(t);
          if (l.contains("evidence"))
            evidence.push_back({{"h", t.head},
                                {"t", t.tail},
                                {"r", rel_name},
                                {"evidence", l.at("evidence")}});
        }
      }
      if (!evidence.empty()) doc.metadata["evidence"] = std::move(evidence);
    } catch (const json::exception& e) {
      throw ParseError("document '" + doc.id + "': " + e.what());
    }
    dedupe_relations(doc);
    validate(doc, schema);
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

Corpus load_docred(const fs::path& path,
                   const std::optional<RelationSchema>& schema) {
  const json root = read_json_file(path);
  if (schema) return parse_docred(root, *schema);
  const fs::path rel_info = path.parent_path() / "rel_info.json";
  if (fs::exists(rel_info)) {
    const json info = read_json_file(rel_info);
    std::vector<std::string> names;
    for (const auto& [key, _] : info.items()) names.push_back(key);
    std::sort(names.begin(), names.end());
    return parse_docred(root, RelationSchema(std::move(names)));
  }
  return parse_docred(root, docred_schema_from_labels(root));
}

TokenizedText tokenize(
    const std::string& text,
    const std::vector<std::pair<std::size_t, std::size_t>>& protected_char_spans) {
  TokenizedText out;
  std::vector<bool> newline_before;
  bool saw_newline = false;
  std::size_t i = 0;
  const auto is_word = [](unsigned char c) {
    return std::isalnum(c) || c >= 0x80 || c == '_';
  };
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      if (c == '\n') saw_newline = true;
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    if (is_word(c))
      while (j < text.size() && is_word(static_cast<unsigned char>(text[j]))) ++j;
    out.char_spans.emplace_back(i, j);
    out.tokens.push_back(Token{text.substr(i, j - i), 0, out.tokens.size()});
    newline_before.push_back(saw_newline);
    saw_newline = false;
    i = j;
  }
  const auto is_protected = [&](std::size_t left, std::size_t right) {
    for (const auto& [b, e] : protected_char_spans)
      if (b < out.char_spans[left].second && e > out.char_spans[right].first)
        return true;
    return false;
  };
  std::size_t sentence = 0;
  for (std::size_t t = 0; t < out.tokens.size(); ++t) {
    if (t > 0 && !is_protected(t - 1, t)) {
      const auto& prev = out.tokens[t - 1].text;
      const bool terminal = prev == "." || prev == "!" || prev == "?";
      if (newline_before[t] || terminal) ++sentence;
    }
    out.tokens[t].sentence_index = sentence;
  }
  return out;
}

Document parse_dwie_document(const json& raw, const RelationSchema& schema) {
  Document doc;
  doc.id = raw.value("id", std::string{"dwie"});
  try {
    const auto content = raw.at("content").get<std::string>();
    std::vector<std::pair<std::size_t, std::size_t>> mention_chars;
    for (const auto& m : raw.at("mentions"))
      mention_chars.emplace_back(m.at("begin").get<std::size_t>(),
                                 m.at("end").get<std::size_t>());
    TokenizedText tk = tokenize(content, mention_chars);
    doc.tokens = std::move(tk.tokens);

    std::map<long long, std::size_t> concept_slot;
    std::vector<EntityCluster> clusters;
    for (const auto& c : raw.at("concepts")) {
      const auto cid = c.at("concept").get<long long>();
      concept_slot[cid] = clusters.size();
      EntityCluster cluster;
      cluster.id = std::to_string(cid);
      clusters.push_back(std::move(cluster));
    }
    for (std::size_t mi = 0; mi < raw.at("mentions").size(); ++mi) {
      const auto& m = raw.at("mentions")[mi];
      const auto [b, e] = mention_chars[mi];
      std::optional<std::size_t> first, last;
      for (std::size_t t = 0; t < tk.char_spans.size(); ++t) {
        if (tk.char_spans[t].second > b && tk.char_spans[t].first < e) {
          if (!first) first = t;
          last = t;
        }
      }
      if (!first)
        throw ValidationError("document '" + doc.id +
                              "': mention outside content");
      auto slot = concept_slot.find(m.at("concept").get<long long>());
      if (slot == concept_slot.end())
        throw ValidationError("document '" + doc.id +
                              "': mention references unknown concept");
      auto& cluster = clusters[slot->second];
      cluster.mentions.push_back(Span{*first, *last});
      cluster.names.push_back(m.value("text", content.substr(b, e - b)));
    }
    drop_repeated_mentions(clusters);

    // Drop empty entities and re-index survivors.
    std::vector<std::optional<std::size_t>> remap(clusters.size());
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      if (clusters[c].mentions.empty()) continue;
      remap[c] = doc.clusters.size();
      doc.clusters.push_back(std::move(clusters[c]));
    }
    for (const auto& r : raw.value("relations", json::array())) {
      auto s = concept_slot.find(r.at("s").get<long long>());
      auto o = concept_slot.find(r.at("o").get<long long>());
      if (s == concept_slot.end() || o == concept_slot.end())
        throw ValidationError("document '" + doc.id +
                              "': relation references unknown concept");
      if (!remap[s->second] || !remap[o->second]) continue;
      const auto rel_name = r.at("p").get<std::string>();
      const auto rel = schema.index_of(rel_name);
      if (!rel)
        throw ValidationError("document '" + doc.id + "': unknown relation '" +
                              rel_name + "'");
      if (*remap[s->second] == *remap[o->second]) continue;
      doc.relations.push_back(
          RelationTriple{*remap[s->second], *remap[o->second], *rel});
    }
    for (const auto& tag : raw.value("tags", json::array())) {
      const auto t = tag.get<std::string>();
      if (t == "train" || t == "test") doc.metadata["split"] = t;
    }
  } catch (const json::exception& e) {
    throw ParseError("document '" + doc.id + "': " + e.what());
  }
  dedupe_relations(doc);
  validate(doc, schema);
  return doc;
}

Corpus load_dwie(const fs::path& path,
                 const std::optional<RelationSchema>& schema) {
  std::vector<json> raws;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path))
      if (entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) raws.push_back(read_json_file(f));
  } else {
    json root = read_json_file(path);
    if (root.is_array())
      for (auto& d : root) raws.push_back(std::move(d));
    else
      raws.push_back(std::move(root));
  }
  RelationSchema resolved;
  if (schema) {
    resolved = *schema;
  } else {
    std::set<std::string> names;
    for (const auto& raw : raws)
      for (const auto& r : raw.value("relations", json::array()))
        names.insert(r.at("p").get<std::string>());
    resolved = RelationSchema(std::vector<std::string>(names.begin(), names.end()));
  }
  Corpus corpus;
  corpus.schema = resolved;
  for (const auto& raw : raws)
    corpus.documents.push_back(parse_dwie_document(raw, resolved));
  return corpus;
}

json to_json(const Corpus& corpus) {
  json docs = json::array();
  for (const auto& doc : corpus.documents) {
    json sentences = json::array();
    json offsets = json::array();
    for (const auto& tok : doc.tokens) {
      while (sentences.size() <= tok.sentence_index) sentences.push_back(json::array());
      sentences[tok.sentence_index].push_back(tok.text);
      offsets.push_back(tok.document_offset);
    }
    json clusters = json::array();
    for (const auto& c : doc.clusters) {
      json mentions = json::array();
      for (const auto& m : c.mentions) mentions.push_back({m.start, m.end});
      clusters.push_back({{"id", c.id}, {"mentions", mentions}, {"names", c.names}});
    }
    json relations = json::array();
    for (const auto& r : doc.relations)
      relations.push_back({{"head", r.head},
                           {"tail", r.tail},
                           {"relation", corpus.schema.name(r.relation)}});
    docs.push_back({{"id", doc.id},
                    {"sentences", sentences},
                    {"offsets", offsets},
                    {"clusters", clusters},
                    {"relations", relations},
                    {"metadata", doc.metadata}});
  }
  return {{"format", "docie-corpus"},
          {"version", 1},
          {"relations", corpus.schema.types()},
          {"documents", docs}};
}

Corpus corpus_from_json(const json& root) {
  Corpus corpus;
  try {
    if (root.value("format", "") != "docie-corpus")
      throw ParseError("not a docie-corpus file");
    corpus.schema =
        RelationSchema(root.at("relations").get<std::vector<std::string>>());
    for (const auto& raw : root.at("documents")) {
      Document doc;
      doc.id = raw.at("id").get<std::string>();
      const auto& sentences = raw.at("sentences");
      const json offsets = raw.value("offsets", json::array());
      for (std::size_t s = 0; s < sentences.size(); ++s)
        for (const auto& tok : sentences[s]) {
          const std::size_t pos = doc.tokens.size();
          const std::size_t off =
              pos < offsets.size() ? offsets[pos].get<std::size_t>() : pos;
          doc.tokens.push_back(Token{tok.get<std::string>(), s, off});
        }
      for (const auto& c : raw.at("clusters")) {
        EntityCluster cluster;
        cluster.id = c.at("id").get<std::string>();
        for (const auto& m : c.at("mentions"))
          cluster.mentions.push_back(
              Span{m.at(0).get<std::size_t>(), m.at(1).get<std::size_t>()});
        if (c.contains("names")) {
          cluster.names = c.at("names").get<std::vector<std::string>>();
        } else {
          for (const auto& m : cluster.mentions)
            cluster.names.push_back(doc.span_text(m));
        }
        doc.clusters.push_back(std::move(cluster));
      }
      for (const auto& r : raw.at("relations")) {
        const auto name = r.at("relation").get<std::string>();
        const auto rel = corpus.schema.index_of(name);
        if (!rel)
          throw ValidationError("document '" + doc.id + "': unknown relation '" +
                                name + "'");
        doc.relations.push_back(RelationTriple{r.at("head").get<std::size_t>(),
                                               r.at("tail").get<std::size_t>(), *rel});
      }
      doc.metadata = raw.value("metadata", json::object());
      dedupe_relations(doc);
      validate(doc, corpus.schema);
      corpus.documents.push_back(std::move(doc));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("canonical corpus: ") + e.what());
  }
  return corpus;
}

void save_canonical(const Corpus& corpus, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(corpus).dump(1) << '\n';
}

Corpus load_canonical(const fs::path& path) {
  return corpus_from_json(read_json_file(path));
}

CorpusStatistics corpus_statistics(const std::vector<Document>& docs) {
  if (docs.empty()) throw std::invalid_argument("corpus_statistics: no documents");
  CorpusStatistics stats;
  double singleton_sum = 0.0;
  std::size_t singleton_docs = 0;
  for (const auto& doc : docs) {
    stats.avg_tokens += static_cast<double>(doc.tokens.size());
    stats.avg_entities += static_cast<double>(doc.clusters.size());
    if (doc.clusters.empty()) continue;
    const auto singles = std::count_if(doc.clusters.begin(), doc.clusters.end(),
                                       [](const EntityCluster& c) {
                                         return c.mentions.size() == 1;
                                       });
    singleton_sum +=
        static_cast<double>(singles) / static_cast<double>(doc.clusters.size());
    ++singleton_docs;
  }
  const auto n = static_cast<double>(docs.size());
  stats.avg_tokens /= n;
  stats.avg_entities /= n;
  if (singleton_docs > 0)
    stats.pct_singletons = 100.0 * singleton_sum / static_cast<double>(singleton_docs);
  return stats;
}

Split holdout_split(const std::vector<Document>& docs, double fraction,
                    std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("holdout_split: fraction must lie in (0, 1)");
  const std::size_t n = docs.size();
  auto dev_size = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n >= 2) dev_size = std::clamp<std::size_t>(dev_size, 1, n - 1);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> in_dev(n, false);
  for (std::size_t i = 0; i < dev_size; ++i) in_dev[order[i]] = true;
  Split split;
  for (std::size_t i = 0; i < n; ++i)
    (in_dev[i] ? split.dev : split.train).push_back(docs[i]);
  return split;
}

}  // namespace docie::corpus
