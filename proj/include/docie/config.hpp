#pragma once

// Experiment configuration: an INI file with [experiment], [optim], [model],
// [loss], [gp] and [gc] sections. Only paths may be overridden from the
// environment (DOCIE_DATA, DOCIE_OUTPUT_DIR). See configs/ for the
// documented schema.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace docie::harness {

enum class Setting { kPipeline, kJoint, kJointM, kGP, kGC };

std::string to_string(Setting s);
// Throws ConfigError for an unknown name.
Setting parse_setting(const std::string& name);

// Mention-level relation decoding (Joint-M and its two extensions).
inline bool mention_level(Setting s) {
  return s == Setting::kJointM || s == Setting::kGP || s == Setting::kGC;
}

struct SettingConfig {
  Setting setting = Setting::kJointM;

  // [experiment]
  std::vector<std::uint64_t> seeds{1, 2, 3};
  double dev_fraction = 0.1;  // used when no dev file is supplied
  std::uint64_t split_seed = 13;
  std::string data_path;
  std::string output_dir = "runs";

  // [optim]
  double encoder_lr = 5e-5;
  double task_lr = 2e-4;
  std::size_t batch_size = 4;
  std::size_t epochs = 72;
  double warmup_ratio = 0.1;
  std::string schedule = "linear";  // linear | constant
  double weight_decay = 0.0;
  double max_grad_norm = 1.0;

  // [model]
  std::size_t dim = 64;
  std::size_t max_input_length = 1024;
  std::size_t max_span_width = 10;
  double mention_ratio = 0.4;
  std::size_t candidate_cap = 512;
  std::size_t ffnn_hidden = 64;
  bool force_gold_mentions = true;

  // [loss]
  double coref_weight = 1.0;
  double mention_weight = 1.0;
  double relation_weight = 1.0;
  double contrastive_weight = 1.0;

  // [gp]
  bool propagation_zero_init = false;

  // [gc]
  std::optional<double> lambda;
  std::optional<double> margin;
  std::optional<std::size_t> prune_k;
  bool freeze_beta = false;
};

// Throws ConfigError on malformed input or failed validation.
SettingConfig parse_config(const std::string& ini_text);
SettingConfig load_config(const std::filesystem::path& path);

// Path overrides from the environment.
void apply_environment(SettingConfig& config);

void validate(const SettingConfig& config);

// Canonical INI rendering; parse_config(to_ini(c)) reproduces c.
std::string to_ini(const SettingConfig& config);

// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& text);

}  // namespace docie::harness
