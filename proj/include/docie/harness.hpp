#pragma once

// Training loop, seed sweep, checkpoints and prediction/report I/O.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "docie/config.hpp"
#include "docie/corpus.hpp"
#include "docie/metrics.hpp"
#include "docie/model.hpp"
#include "docie/nn.hpp"

namespace docie::harness {

using Logger = std::function<void(const std::string&)>;

struct EpochLog {
  std::size_t epoch = 0;        // 1-based
  LossBreakdown loss;           // mean per document
  double grad_norm = 0.0;       // mean pre-clip norm per step
  double dev_re_f1 = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::unique_ptr<Model> model;       // parameters of the best dev epoch
  std::vector<nn::AdamW> optimizers;  // one per parameter store, at that epoch
  std::uint64_t seed = 0;
  std::size_t best_epoch = 0;
  double best_dev_f1 = -1.0;
  std::vector<EpochLog> history;
};

// Learning-rate multiplier at 0-based `step`: linear warmup over the first
// warmup_ratio of steps, then linear decay to 0 ("linear") or flat
// ("constant").
double lr_multiplier(const SettingConfig& config, std::size_t step, std::size_t total_steps);

// One run with a fixed seed. The vocabulary is built from `train`. Throws
// TrainingDiverged on a non-finite loss.
TrainResult train(const SettingConfig& config, const std::vector<corpus::Document>& train,
                  const std::vector<corpus::Document>& dev,
                  const corpus::RelationSchema& schema, std::uint64_t seed,
                  const Logger& log = {});

// One run per configured seed; returns the run with the best dev RE F1
// (ties go to the earlier seed).
TrainResult train_sweep(const SettingConfig& config,
                        const std::vector<corpus::Document>& train,
                        const std::vector<corpus::Document>& dev,
                        const corpus::RelationSchema& schema, const Logger& log = {});

struct Checkpoint {
  SettingConfig config;
  std::unique_ptr<Model> model;
  std::vector<nn::AdamW> optimizers;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  double best_dev_f1 = 0.0;
};

constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const std::vector<nn::AdamW>& optimizers, std::size_t epoch,
                     double best_dev_f1);
// Throws CheckpointError when the file is missing, truncated, of another
// version, or its embedded config text does not match its hash.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// {doc_id, clusters: [[[s, e], ...], ...], triples: [{head_cluster_idx,
// tail_cluster_idx, relation_name, score}]}
nlohmann::json predictions_to_json(const std::vector<metrics::DocumentPrediction>& preds,
                                   const corpus::RelationSchema& schema);
std::vector<metrics::DocumentPrediction> predictions_from_json(
    const nlohmann::json& root, const corpus::RelationSchema& schema);

// Train/dev/test documents from a corpus path. Recognised layouts:
//  * canonical: a docie-corpus JSON file (all train), or a directory with
//    train.json / dev.json / test.json in that format;
//  * DocRED: a directory with train_annotated.json, dev.json, test.json and
//    rel_info.json, or a single DocRED split file (train);
//  * DWIE: a directory of per-document annotation files, split
//    by their "train"/"test" tags, or a single annotation file.
// Missing splits are left empty. Throws ParseError for unrecognised input.
struct DataSplits {
  std::string format;  // canonical | docred | dwie
  corpus::RelationSchema schema;
  std::vector<corpus::Document> train;
  std::vector<corpus::Document> dev;
  std::vector<corpus::Document> test;
};
DataSplits load_data(const std::filesystem::path& path);

// dev_fraction > 0 holds out a seeded dev split when none is supplied;
// 0 selects on the training set itself.
void ensure_dev(DataSplits& data, const SettingConfig& config);

nlohmann::json report_to_json(const metrics::Report& report);
std::string report_table(const metrics::Report& report);

}  // namespace docie::harness
