#include "docie/config.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "docie/error.hpp"

namespace docie::harness {

namespace pt = boost::property_tree;

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "experiment.setting", "experiment.seeds", "experiment.dev_fraction",
      "experiment.split_seed", "experiment.data_path", "experiment.output_dir",
      "optim.encoder_lr", "optim.task_lr", "optim.batch_size", "optim.epochs",
      "optim.warmup_ratio", "optim.schedule", "optim.weight_decay",
      "optim.max_grad_norm", "model.dim", "model.max_input_length",
      "model.max_span_width", "model.mention_ratio", "model.candidate_cap",
      "model.ffnn_hidden", "model.force_gold_mentions", "loss.coref_weight",
      "loss.mention_weight", "loss.relation_weight", "loss.contrastive_weight",
      "gp.propagation_zero_init", "gc.lambda", "gc.margin", "gc.prune_k",
      "gc.freeze_beta"};
  return keys;
}

// ptree's own defaulted lookups swallow conversion failures; these do not.
template <typename T>
std::optional<T> get_optional(const pt::ptree& tree, const std::string& key) {
  const auto child = tree.get_child_optional(key);
  if (!child) return std::nullopt;
  const auto v = child->get_value_optional<T>();
  if (!v) throw ConfigError("bad value for " + key + ": '" + child->data() + "'");
  return *v;
}

template <typename T>
T get(const pt::ptree& tree, const std::string& key, T fallback) {
  return get_optional<T>(tree, key).value_or(fallback);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(item.substr(first), &used));
    } catch (const std::exception&) {
      throw ConfigError("bad seed list: " + text);
    }
  }
  return out;
}

std::string number(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

}  // namespace

std::string to_string(Setting s) {
  switch (s) {
    case Setting::kPipeline: return "pipeline";
    case Setting::kJoint: return "joint";
    case Setting::kJointM: return "joint_m";
    case Setting::kGP: return "gp";
    case Setting::kGC: return "gc";
  }
  return "?";
}

Setting parse_setting(const std::string& name) {
  for (Setting s : {Setting::kPipeline, Setting::kJoint, Setting::kJointM,
                    Setting::kGP, Setting::kGC})
    if (to_string(s) == name) return s;
  throw ConfigError("unknown setting '" + name +
                    "' (expected pipeline, joint, joint_m, gp or gc)");
}

SettingConfig parse_config(const std::string& ini_text) {
  pt::ptree tree;
  try {
    std::istringstream in(ini_text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config: key outside a section: " + section);
    for (const auto& [key, _] : body)
      if (!known_keys().count(section + "." + key))
        throw ConfigError("config: unknown key " + section + "." + key);
  }

  SettingConfig c;
  c.setting = parse_setting(get<std::string>(tree, "experiment.setting", "joint_m"));
  if (auto s = get_optional<std::string>(tree, "experiment.seeds")) c.seeds = parse_seeds(*s);
  c.dev_fraction = get(tree, "experiment.dev_fraction", c.dev_fraction);
  c.split_seed = get(tree, "experiment.split_seed", c.split_seed);
  c.data_path = get(tree, "experiment.data_path", c.data_path);
  c.output_dir = get(tree, "experiment.output_dir", c.output_dir);

  c.encoder_lr = get(tree, "optim.encoder_lr", c.encoder_lr);
  c.task_lr = get(tree, "optim.task_lr", c.task_lr);
  c.batch_size = get(tree, "optim.batch_size", c.batch_size);
  c.epochs = get(tree, "optim.epochs", c.epochs);
  c.warmup_ratio = get(tree, "optim.warmup_ratio", c.warmup_ratio);
  c.schedule = get(tree, "optim.schedule", c.schedule);
  c.weight_decay = get(tree, "optim.weight_decay", c.weight_decay);
  c.max_grad_norm = get(tree, "optim.max_grad_norm", c.max_grad_norm);

  c.dim = get(tree, "model.dim", c.dim);
  c.max_input_length = get(tree, "model.max_input_length", c.max_input_length);
  c.max_span_width = get(tree, "model.max_span_width", c.max_span_width);
  c.mention_ratio = get(tree, "model.mention_ratio", c.mention_ratio);
  c.candidate_cap = get(tree, "model.candidate_cap", c.candidate_cap);
  c.ffnn_hidden = get(tree, "model.ffnn_hidden", c.ffnn_hidden);
  c.force_gold_mentions = get(tree, "model.force_gold_mentions", c.force_gold_mentions);

  c.coref_weight = get(tree, "loss.coref_weight", c.coref_weight);
  c.mention_weight = get(tree, "loss.mention_weight", c.mention_weight);
  c.relation_weight = get(tree, "loss.relation_weight", c.relation_weight);
  c.contrastive_weight = get(tree, "loss.contrastive_weight", c.contrastive_weight);

  c.propagation_zero_init = get(tree, "gp.propagation_zero_init", c.propagation_zero_init);

  c.lambda = get_optional<double>(tree, "gc.lambda");
  c.margin = get_optional<double>(tree, "gc.margin");
  c.prune_k = get_optional<std::size_t>(tree, "gc.prune_k");
  c.freeze_beta = get(tree, "gc.freeze_beta", c.freeze_beta);

  validate(c);
  return c;
}

SettingConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  SettingConfig c = parse_config(buffer.str());
  apply_environment(c);
  return c;
}

void apply_environment(SettingConfig& config) {
  if (const char* v = std::getenv("DOCIE_DATA"); v && *v) config.data_path = v;
  if (const char* v = std::getenv("DOCIE_OUTPUT_DIR"); v && *v) config.output_dir = v;
}

void validate(const SettingConfig& c) {
  const auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
  if (c.seeds.empty()) fail("experiment.seeds must list at least one seed");
  if (!(c.dev_fraction >= 0.0 && c.dev_fraction < 1.0))
    fail("experiment.dev_fraction must be in [0, 1)");
  if (!(c.encoder_lr > 0.0) || !(c.task_lr > 0.0)) fail("learning rates must be > 0");
  if (c.batch_size == 0) fail("optim.batch_size must be >= 1");
  if (c.epochs == 0) fail("optim.epochs must be >= 1");
  if (!(c.warmup_ratio >= 0.0 && c.warmup_ratio < 1.0))
    fail("optim.warmup_ratio must be in [0, 1)");
  if (c.schedule != "linear" && c.schedule != "constant")
    fail("optim.schedule must be linear or constant");
  if (c.weight_decay < 0.0) fail("optim.weight_decay must be >= 0");
  if (c.dim == 0 || c.ffnn_hidden == 0) fail("model sizes must be >= 1");
  if (c.max_input_length == 0) fail("model.max_input_length must be >= 1");
  if (c.max_span_width == 0) fail("model.max_span_width must be >= 1");
  if (!(c.mention_ratio > 0.0)) fail("model.mention_ratio must be > 0");
  if (c.candidate_cap == 0) fail("model.candidate_cap must be >= 1");
  for (double w : {c.coref_weight, c.mention_weight, c.relation_weight, c.contrastive_weight})
    if (w < 0.0) fail("loss weights must be >= 0");
  if (c.setting == Setting::kGC) {
    if (!c.lambda || !c.margin || !c.prune_k)
      fail("setting gc requires gc.lambda, gc.margin and gc.prune_k");
    if (*c.lambda < 0.0) fail("gc.lambda must be >= 0");
    if (!(*c.margin > 0.0)) fail("gc.margin must be > 0");
    if (*c.prune_k == 0) fail("gc.prune_k must be >= 1");
  }
}

std::string to_ini(const SettingConfig& c) {
  std::ostringstream out;
  out << "[experiment]\n"
      << "setting = " << to_string(c.setting) << "\n"
      << "seeds = ";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) out << (i ? "," : "") << c.seeds[i];
  out << "\n"
      << "dev_fraction = " << number(c.dev_fraction) << "\n"
      << "split_seed = " << c.split_seed << "\n";
  if (!c.data_path.empty()) out << "data_path = " << c.data_path << "\n";
  out << "output_dir = " << c.output_dir << "\n\n"
      << "[optim]\n"
      << "encoder_lr = " << number(c.encoder_lr) << "\n"
      << "task_lr = " << number(c.task_lr) << "\n"
      << "batch_size = " << c.batch_size << "\n"
      << "epochs = " << c.epochs << "\n"
      << "warmup_ratio = " << number(c.warmup_ratio) << "\n"
      << "schedule = " << c.schedule << "\n"
      << "weight_decay = " << number(c.weight_decay) << "\n"
      << "max_grad_norm = " << number(c.max_grad_norm) << "\n\n"
      << "[model]\n"
      << "dim = " << c.dim << "\n"
      << "max_input_length = " << c.max_input_length << "\n"
      << "max_span_width = " << c.max_span_width << "\n"
      << "mention_ratio = " << number(c.mention_ratio) << "\n"
      << "candidate_cap = " << c.candidate_cap << "\n"
      << "ffnn_hidden = " << c.ffnn_hidden << "\n"
      << "force_gold_mentions = " << (c.force_gold_mentions ? "true" : "false") << "\n\n"
      << "[loss]\n"
      << "coref_weight = " << number(c.coref_weight) << "\n"
      << "mention_weight = " << number(c.mention_weight) << "\n"
      << "relation_weight = " << number(c.relation_weight) << "\n"
      << "contrastive_weight = " << number(c.contrastive_weight) << "\n\n"
      << "[gp]\n"
      << "propagation_zero_init = " << (c.propagation_zero_init ? "true" : "false")
      << "\n\n"
      << "[gc]\n";
  if (c.lambda) out << "lambda = " << number(*c.lambda) << "\n";
  if (c.margin) out << "margin = " << number(*c.margin) << "\n";
  if (c.prune_k) out << "prune_k = " << *c.prune_k << "\n";
  out << "freeze_beta = " << (c.freeze_beta ? "true" : "false") << "\n";
  return out.str();
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace docie::harness
