#pragma once

// Entity-centric evaluation: mention F1, MUC / B-cubed / CEAF-phi4 and their
// average, predicted-to-gold entity ID mapping, entity-level relation F1 and
// the train-fact-excluding "Ign" variant. Corpus scores are micro-averaged
// (counts summed across documents before dividing).

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "docie/corpus.hpp"

namespace docie::metrics {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

PRF make_prf(double precision, double recall);

// Numerators/denominators for precision and recall; x/0 reads as 0.
struct Counts {
  double p_num = 0.0;
  double p_den = 0.0;
  double r_num = 0.0;
  double r_den = 0.0;

  Counts& operator+=(const Counts& o);
  PRF prf() const;
};

using Clustering = std::vector<std::vector<corpus::Span>>;

Clustering clustering_of(const std::vector<corpus::EntityCluster>& clusters);

Counts mention_counts(const std::vector<corpus::Span>& predicted,
                      const std::vector<corpus::Span>& gold);
Counts muc_counts(const Clustering& predicted, const Clustering& gold);
Counts b_cubed_counts(const Clustering& predicted, const Clustering& gold);
Counts ceaf_phi4_counts(const Clustering& predicted, const Clustering& gold);

// Single-document convenience wrappers.
PRF mention_f1(const std::vector<corpus::Span>& predicted,
               const std::vector<corpus::Span>& gold);
PRF muc(const Clustering& predicted, const Clustering& gold);
PRF b_cubed(const Clustering& predicted, const Clustering& gold);
PRF ceaf_phi4(const Clustering& predicted, const Clustering& gold);
double coref_avg_f1(const Clustering& predicted, const Clustering& gold);

// Maximum-weight assignment on a (rows x cols) weight matrix. Returns, for
// each row, the matched column or -1.
std::vector<long> max_weight_assignment(const std::vector<std::vector<double>>& weights);

// For each predicted cluster: the gold index when its span set equals a gold
// cluster exactly, else a dummy ID >= gold.size() (unique per cluster).
std::vector<std::size_t> map_entity_ids(const Clustering& predicted,
                                        const Clustering& gold);

// (head surface, tail surface, relation name) facts seen in training. A
// triple counts as seen if any mention-name pair of its entities is indexed.
class FactIndex {
 public:
  static FactIndex build(const std::vector<corpus::Document>& train,
                         const corpus::RelationSchema& schema);

  void add(const std::string& head, const std::string& tail, const std::string& rel);
  bool contains(const std::vector<std::string>& head_names,
                const std::vector<std::string>& tail_names,
                const std::string& relation) const;
  std::size_t size() const { return facts_.size(); }

  void save(const std::filesystem::path& path) const;
  static FactIndex load(const std::filesystem::path& path);

 private:
  std::set<std::tuple<std::string, std::string, std::string>> facts_;
};

// One document for relation scoring. Predicted triples already carry
// mapped IDs (gold index or dummy).
struct RelationDoc {
  std::vector<corpus::RelationTriple> predicted;
  std::vector<corpus::RelationTriple> gold;
  std::vector<corpus::EntityCluster> gold_clusters;  // for FactIndex lookup
};

struct RelationScores {
  PRF re;
  PRF re_ign;
};

// RE-Ign: correct facts also seen in training are removed from the correct
// count and from the prediction count; recall is left as in RE.
RelationScores relation_f1(const std::vector<RelationDoc>& docs,
                           const corpus::RelationSchema& schema,
                           const FactIndex* fact_index = nullptr);

// Full report over a corpus of (prediction, gold) documents.
struct DocumentPrediction {
  std::string doc_id;
  std::vector<corpus::EntityCluster> clusters;
  // head/tail index into `clusters`.
  std::vector<corpus::RelationTriple> triples;
  std::vector<double> triple_scores;
};

struct Report {
  PRF mention;
  PRF muc;
  PRF b_cubed;
  PRF ceaf_phi4;
  double coref_avg_f1 = 0.0;
  PRF re;
  PRF re_ign;
  std::size_t documents = 0;
};

// Documents absent from `predictions` are scored as empty predictions.
Report evaluate(const std::vector<DocumentPrediction>& predictions,
                const std::vector<corpus::Document>& gold,
                const corpus::RelationSchema& schema,
                const FactIndex* fact_index = nullptr);

}  // namespace docie::metrics
