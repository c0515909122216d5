// docie: train, predict, score and inspect document-level joint IE models.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "docie/config.hpp"
#include "docie/corpus.hpp"
#include "docie/error.hpp"
#include "docie/harness.hpp"
#include "docie/metrics.hpp"
#include "docie/synthetic.hpp"

namespace fs = std::filesystem;
using namespace docie;

namespace {

const std::vector<corpus::Document>& pick_split(const harness::DataSplits& data,
                                                const std::string& split) {
  if (split == "train") return data.train;
  if (split == "dev") return data.dev;
  if (split == "test") return data.test;
  throw ConfigError("unknown split '" + split + "' (train, dev or test)");
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

void print_stats(const std::string& name, const std::vector<corpus::Document>& docs) {
  if (docs.empty()) return;
  const auto s = corpus::corpus_statistics(docs);
  std::cout << std::left << std::setw(6) << name << std::right << std::setw(7) << docs.size()
            << std::fixed << std::setprecision(1) << std::setw(10) << s.avg_tokens
            << std::setw(10) << s.avg_entities << std::setw(11) << s.pct_singletons << "%\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Document-level joint coreference and relation extraction"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Train a model (seed sweep, best dev RE F1)");
  std::string config_path, data_path, setting, checkpoint_out;
  std::optional<std::uint64_t> seed;
  train->add_option("--config", config_path, "INI configuration file")->required();
  train->add_option("--data", data_path, "Corpus file or directory (overrides config)");
  train->add_option("--setting", setting, "pipeline | joint | joint_m | gp | gc");
  train->add_option("--seed", seed, "Train a single seed instead of the configured sweep");
  train->add_option("--out", checkpoint_out, "Checkpoint path (default <output_dir>/<setting>.ckpt)");

  // predict
  auto* predict = app.add_subcommand("predict", "Write prediction JSON");
  std::string checkpoint_path, pred_out, split = "dev";
  predict->add_option("--checkpoint", checkpoint_path)->required();
  predict->add_option("--out", pred_out)->required();
  predict->add_option("--data", data_path, "Corpus (default: path stored in the checkpoint)");
  predict->add_option("--split", split, "train | dev | test");

  // score
  auto* score = app.add_subcommand("score", "Score prediction JSON against a gold corpus");
  std::string pred_path, gold_path, fact_index_path, report_out;
  score->add_option("--pred", pred_path)->required();
  score->add_option("--gold", gold_path)->required();
  score->add_option("--split", split, "train | dev | test");
  score->add_option("--fact-index", fact_index_path, "Train facts for RE-Ign");
  score->add_option("--json", report_out, "Also write the report as JSON");

  // stats
  auto* stats = app.add_subcommand("stats", "Corpus statistics per split");
  stats->add_option("--data", data_path)->required();

  // fact-index
  auto* facts = app.add_subcommand("fact-index", "Build the RE-Ign fact index from train");
  std::string facts_out;
  facts->add_option("--data", data_path)->required();
  facts->add_option("--out", facts_out)->required();

  // convert
  auto* convert = app.add_subcommand("convert", "Write the canonical corpus cache");
  std::string convert_out;
  convert->add_option("--data", data_path)->required();
  convert->add_option("--out", convert_out, "Output directory")->required();

  // toy
  auto* toy = app.add_subcommand("toy", "Generate a planted synthetic corpus");
  synthetic::ToyOptions toy_opts;
  std::string toy_out;
  toy->add_option("--out", toy_out, "Output directory (train.json)")->required();
  toy->add_option("--docs", toy_opts.documents);
  toy->add_option("--seed", toy_opts.seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      harness::SettingConfig config = harness::load_config(config_path);
      if (!setting.empty()) config.setting = harness::parse_setting(setting);
      if (!data_path.empty()) config.data_path = data_path;
      if (seed) config.seeds = {*seed};
      if (config.data_path.empty()) throw ConfigError("no data path (use --data or DOCIE_DATA)");
      harness::validate(config);
      harness::DataSplits data = harness::load_data(config.data_path);
      harness::ensure_dev(data, config);
      std::cerr << "setting " << harness::to_string(config.setting) << ": "
                << data.train.size() << " train / " << data.dev.size() << " dev documents ("
                << data.format << ")\n";
      auto result = harness::train_sweep(config, data.train, data.dev, data.schema,
                                         [](const std::string& line) { std::cerr << line << '\n'; });
      fs::path out = checkpoint_out.empty()
                         ? fs::path(config.output_dir) / (harness::to_string(config.setting) + ".ckpt")
                         : fs::path(checkpoint_out);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      harness::save_checkpoint(out, *result.model, result.optimizers, result.best_epoch,
                               result.best_dev_f1);
      std::cout << "best dev RE F1 " << result.best_dev_f1 << " (seed " << result.seed
                << ", epoch " << result.best_epoch << ") -> " << out.string() << '\n';
    } else if (*predict) {
      harness::Checkpoint ckpt = harness::load_checkpoint(checkpoint_path);
      const std::string path = data_path.empty() ? ckpt.config.data_path : data_path;
      if (path.empty()) throw ConfigError("no data path stored in checkpoint; pass --data");
      harness::DataSplits data = harness::load_data(path);
      harness::ensure_dev(data, ckpt.config);
      const auto& docs = pick_split(data, split);
      write_json(pred_out, harness::predictions_to_json(ckpt.model->predict(docs),
                                                        ckpt.model->schema()));
      std::cout << docs.size() << " documents -> " << pred_out << '\n';
    } else if (*score) {
      harness::DataSplits gold = harness::load_data(gold_path);
      const auto& docs = pick_split(gold, split);
      std::ifstream in(pred_path);
      if (!in) throw ParseError("cannot open " + pred_path);
      nlohmann::json root;
      try {
        root = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(pred_path + ": " + e.what());
      }
      const auto preds = harness::predictions_from_json(root, gold.schema);
      std::optional<metrics::FactIndex> index;
      if (!fact_index_path.empty()) index = metrics::FactIndex::load(fact_index_path);
      const auto report =
          metrics::evaluate(preds, docs, gold.schema, index ? &*index : nullptr);
      std::cout << harness::report_table(report);
      if (!report_out.empty()) write_json(report_out, harness::report_to_json(report));
    } else if (*stats) {
      const harness::DataSplits data = harness::load_data(data_path);
      std::cout << "format " << data.format << ", " << data.schema.size()
                << " relation types\n"
                << "split     docs    tokens  entities  singletons\n";
      print_stats("train", data.train);
      print_stats("dev", data.dev);
      print_stats("test", data.test);
    } else if (*facts) {
      const harness::DataSplits data = harness::load_data(data_path);
      const auto index = metrics::FactIndex::build(data.train, data.schema);
      index.save(facts_out);
      std::cout << index.size() << " facts -> " << facts_out << '\n';
    } else if (*convert) {
      const harness::DataSplits data = harness::load_data(data_path);
      fs::create_directories(convert_out);
      for (auto [name, docs] : {std::pair{"train", &data.train}, {"dev", &data.dev},
                                {"test", &data.test}})
        if (!docs->empty())
          corpus::save_canonical({data.schema, *docs}, fs::path(convert_out) / (std::string(name) + ".json"));
      std::cout << "wrote " << convert_out << '\n';
    } else if (*toy) {
      fs::create_directories(toy_out);
      corpus::save_canonical(synthetic::generate(toy_opts), fs::path(toy_out) / "train.json");
      std::cout << toy_opts.documents << " documents -> " << toy_out << "/train.json\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
