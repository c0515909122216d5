#include "docie/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "docie/error.hpp"

namespace docie::harness {

namespace {

nn::AdamWOptions optimizer_options(const SettingConfig& c) {
  nn::AdamWOptions o;
  o.encoder_lr = c.encoder_lr;
  o.task_lr = c.task_lr;
  o.weight_decay = c.weight_decay;
  o.max_grad_norm = c.max_grad_norm;
  return o;
}

using Snapshot = std::vector<std::vector<Matrix>>;

Snapshot snapshot(const Model& model) {
  Snapshot out;
  for (const nn::ParamStore* store : model.stores()) {
    std::vector<Matrix> values;
    for (const auto& p : store->all()) values.push_back(p.value);
    out.push_back(std::move(values));
  }
  return out;
}

void restore(Model& model, const Snapshot& snap) {
  const auto stores = model.stores();
  for (std::size_t s = 0; s < stores.size(); ++s) {
    std::size_t i = 0;
    for (auto& p : stores[s]->all()) p.value = snap[s][i++];
  }
}

std::string format_loss(const LossBreakdown& l) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4) << "loss " << l.total << " (coref "
      << l.coref << ", mention " << l.mention << ", relation " << l.relation
      << ", contrastive " << l.contrastive << ")";
  return out.str();
}

constexpr char kMagic[8] = {'D', 'O', 'C', 'I', 'E', 'C', 'K', 'P'};

}  // namespace

double lr_multiplier(const SettingConfig& config, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) return 1.0;
  const auto warmup = static_cast<std::size_t>(
      std::floor(config.warmup_ratio * static_cast<double>(total_steps)));
  if (step < warmup)
    return static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (config.schedule == "constant") return 1.0;
  const double remaining = static_cast<double>(total_steps - step);
  return remaining / static_cast<double>(total_steps - warmup);
}

TrainResult train(const SettingConfig& config, const std::vector<corpus::Document>& train,
                  const std::vector<corpus::Document>& dev,
                  const corpus::RelationSchema& schema, std::uint64_t seed,
                  const Logger& log) {
  if (train.empty()) throw std::invalid_argument("train: empty training set");
  TrainResult result;
  result.seed = seed;
  result.model =
      std::make_unique<Model>(config, encoding::Vocabulary::build(train), schema, seed);
  Model& model = *result.model;
  const auto stores = model.stores();
  std::vector<nn::AdamW> optimizers(stores.size(), nn::AdamW(optimizer_options(config)));

  const std::size_t steps_per_epoch = (train.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = steps_per_epoch * config.epochs;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  Snapshot best_params;
  std::vector<nn::AdamW> best_optim;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    LossBreakdown epoch_loss;
    double norm_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t end = std::min(order.size(), b + config.batch_size);
      const double inv = 1.0 / static_cast<double>(end - b);
      for (nn::ParamStore* s : stores) s->zero_grad();
      for (std::size_t i = b; i < end; ++i) {
        const corpus::Document& doc = train[order[i]];
        ad::Tape tape;
        LossBreakdown parts;
        const ad::Var loss = model.loss(tape, doc, &parts);
        if (!std::isfinite(parts.total))
          throw TrainingDiverged("non-finite loss on document '" + doc.id + "' at epoch " +
                                 std::to_string(epoch) + ": " + format_loss(parts));
        tape.backward(ad::scale(loss, inv));
        epoch_loss += parts;
      }
      const double mult = lr_multiplier(config, step++, total_steps);
      for (std::size_t s = 0; s < stores.size(); ++s)
        norm_sum += optimizers[s].step(*stores[s], mult);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.loss = epoch_loss.scaled(1.0 / static_cast<double>(train.size()));
    entry.grad_norm = norm_sum / static_cast<double>(steps_per_epoch);
    if (!dev.empty())
      entry.dev_re_f1 = metrics::evaluate(model.predict(dev), dev, schema).re.f1;
    entry.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(entry);

    if (dev.empty() || entry.dev_re_f1 > result.best_dev_f1) {
      result.best_dev_f1 = entry.dev_re_f1;
      result.best_epoch = epoch;
      best_params = snapshot(model);
      best_optim = optimizers;
    }
    if (log) {
      std::ostringstream line;
      line << "seed " << seed << " epoch " << epoch << "/" << config.epochs << " "
           << format_loss(entry.loss) << " grad " << std::setprecision(4)
           << entry.grad_norm << " dev_re_f1 " << entry.dev_re_f1 << " ["
           << std::setprecision(3) << entry.seconds << "s]";
      log(line.str());
    }
  }
  restore(model, best_params);
  result.optimizers = std::move(best_optim);
  return result;
}

TrainResult train_sweep(const SettingConfig& config,
                        const std::vector<corpus::Document>& train_docs,
                        const std::vector<corpus::Document>& dev,
                        const corpus::RelationSchema& schema, const Logger& log) {
  TrainResult best;
  for (std::uint64_t seed : config.seeds) {
    TrainResult run = train(config, train_docs, dev, schema, seed, log);
    if (log)
      log("seed " + std::to_string(seed) + " best dev_re_f1 " +
          std::to_string(run.best_dev_f1) + " at epoch " + std::to_string(run.best_epoch));
    if (!best.model || run.best_dev_f1 > best.best_dev_f1) best = std::move(run);
  }
  return best;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const std::vector<nn::AdamW>& optimizers, std::size_t epoch,
                     double best_dev_f1) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  const std::string config_text = to_ini(model.config());
  out.write(kMagic, sizeof(kMagic));
  nn::write_pod<std::uint32_t>(out, kCheckpointVersion);
  nn::write_pod<std::uint64_t>(out, fnv1a(config_text));
  nn::write_string(out, config_text);
  nn::write_pod<std::uint64_t>(out, model.seed());
  nn::write_pod<std::uint64_t>(out, epoch);
  nn::write_pod<double>(out, best_dev_f1);
  model.vocabulary().save(out);
  nn::write_pod<std::uint64_t>(out, model.schema().size());
  for (const auto& name : model.schema().types()) nn::write_string(out, name);
  const auto stores = model.stores();
  nn::write_pod<std::uint64_t>(out, stores.size());
  for (const nn::ParamStore* store : stores) {
    nn::write_pod<std::uint64_t>(out, store->size());
    for (const auto& p : store->all()) {
      nn::write_string(out, p.name);
      nn::write_matrix(out, p.value);
    }
  }
  nn::write_pod<std::uint64_t>(out, optimizers.size());
  for (const auto& o : optimizers) o.save(out);
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint not found: " + path.string());
  in.exceptions(std::ios::failbit | std::ios::badbit);
  try {
    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    if (!std::equal(magic, magic + sizeof(magic), kMagic))
      throw CheckpointError(path.string() + " is not a checkpoint");
    const auto version = nn::read_pod<std::uint32_t>(in);
    if (version != kCheckpointVersion)
      throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    const auto hash = nn::read_pod<std::uint64_t>(in);
    const std::string config_text = nn::read_string(in);
    if (fnv1a(config_text) != hash)
      throw CheckpointError("checkpoint config hash mismatch in " + path.string());

    Checkpoint ckpt;
    ckpt.config = parse_config(config_text);
    ckpt.seed = nn::read_pod<std::uint64_t>(in);
    ckpt.epoch = nn::read_pod<std::uint64_t>(in);
    ckpt.best_dev_f1 = nn::read_pod<double>(in);
    encoding::Vocabulary vocab = encoding::Vocabulary::load(in);
    std::vector<std::string> types(nn::read_pod<std::uint64_t>(in));
    for (auto& t : types) t = nn::read_string(in);
    ckpt.model = std::make_unique<Model>(ckpt.config, std::move(vocab),
                                         corpus::RelationSchema(std::move(types)), ckpt.seed);
    const auto stores = ckpt.model->stores();
    if (nn::read_pod<std::uint64_t>(in) != stores.size())
      throw CheckpointError("checkpoint store count does not match its setting");
    for (nn::ParamStore* store : stores) {
      const auto count = nn::read_pod<std::uint64_t>(in);
      if (count != store->size())
        throw CheckpointError("checkpoint parameter count mismatch");
      for (std::uint64_t i = 0; i < count; ++i) {
        const std::string name = nn::read_string(in);
        Matrix value = nn::read_matrix(in);
        if (!store->contains(name)) throw CheckpointError("unknown parameter " + name);
        nn::Param& p = store->get(name);
        if (p.value.rows() != value.rows() || p.value.cols() != value.cols())
          throw CheckpointError("shape mismatch for parameter " + name);
        p.value = std::move(value);
      }
    }
    const auto n_opt = nn::read_pod<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < n_opt; ++i) {
      nn::AdamW opt(optimizer_options(ckpt.config));
      opt.load(in);
      ckpt.optimizers.push_back(std::move(opt));
    }
    return ckpt;
  } catch (const std::ios::failure&) {
    throw CheckpointError("truncated checkpoint " + path.string());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config: ") + e.what());
  }
}

nlohmann::json predictions_to_json(const std::vector<metrics::DocumentPrediction>& preds,
                                   const corpus::RelationSchema& schema) {
  nlohmann::json docs = nlohmann::json::array();
  for (const auto& p : preds) {
    nlohmann::json clusters = nlohmann::json::array();
    for (const auto& c : p.clusters) {
      nlohmann::json spans = nlohmann::json::array();
      for (const auto& m : c.mentions) spans.push_back({m.start, m.end});
      clusters.push_back(std::move(spans));
    }
    nlohmann::json triples = nlohmann::json::array();
    for (std::size_t i = 0; i < p.triples.size(); ++i) {
      nlohmann::json t = {{"head_cluster_idx", p.triples[i].head},
                          {"tail_cluster_idx", p.triples[i].tail},
                          {"relation_name", schema.name(p.triples[i].relation)}};
      if (i < p.triple_scores.size()) t["score"] = p.triple_scores[i];
      triples.push_back(std::move(t));
    }
    docs.push_back({{"doc_id", p.doc_id}, {"clusters", clusters}, {"triples", triples}});
  }
  return docs;
}

std::vector<metrics::DocumentPrediction> predictions_from_json(
    const nlohmann::json& root, const corpus::RelationSchema& schema) {
  std::vector<metrics::DocumentPrediction> out;
  try {
    for (const auto& d : root) {
      metrics::DocumentPrediction p;
      p.doc_id = d.at("doc_id").get<std::string>();
      for (const auto& c : d.at("clusters")) {
        corpus::EntityCluster cluster;
        cluster.id = "pred" + std::to_string(p.clusters.size());
        for (const auto& s : c) {
          const auto start = s.at(0).get<std::size_t>();
          const auto end = s.at(1).get<std::size_t>();
          if (end < start) throw ParseError("prediction span end < start in " + p.doc_id);
          cluster.mentions.push_back({start, end});
          cluster.names.emplace_back();
        }
        p.clusters.push_back(std::move(cluster));
      }
      for (const auto& t : d.at("triples")) {
        const auto name = t.at("relation_name").get<std::string>();
        const auto rel = schema.index_of(name);
        if (!rel) throw ParseError("unknown relation '" + name + "' in " + p.doc_id);
        corpus::RelationTriple triple{t.at("head_cluster_idx").get<std::size_t>(),
                                      t.at("tail_cluster_idx").get<std::size_t>(), *rel};
        if (triple.head >= p.clusters.size() || triple.tail >= p.clusters.size())
          throw ParseError("triple cluster index out of range in " + p.doc_id);
        p.triples.push_back(triple);
        p.triple_scores.push_back(t.value("score", 0.0));
      }
      out.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("prediction JSON: ") + e.what());
  }
  return out;
}

nlohmann::json report_to_json(const metrics::Report& r) {
  const auto prf = [](const metrics::PRF& x) {
    return nlohmann::json{{"precision", x.precision}, {"recall", x.recall}, {"f1", x.f1}};
  };
  return {{"documents", r.documents}, {"mention", prf(r.mention)}, {"muc", prf(r.muc)},
          {"b_cubed", prf(r.b_cubed)}, {"ceaf_phi4", prf(r.ceaf_phi4)},
          {"coref_avg_f1", r.coref_avg_f1}, {"re", prf(r.re)}, {"re_ign", prf(r.re_ign)}};
}

std::string report_table(const metrics::Report& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  const auto row = [&](const char* name, const metrics::PRF& x) {
    out << std::left << std::setw(10) << name << std::right << std::setw(8)
        << 100 * x.precision << std::setw(8) << 100 * x.recall << std::setw(8)
        << 100 * x.f1 << "\n";
  };
  out << std::left << std::setw(10) << "metric" << std::right << std::setw(8) << "P"
      << std::setw(8) << "R" << std::setw(8) << "F1" << "\n";
  row("mention", r.mention);
  row("muc", r.muc);
  row("b_cubed", r.b_cubed);
  row("ceaf_phi4", r.ceaf_phi4);
  out << std::left << std::setw(10) << "coref_avg" << std::right << std::setw(24)
      << 100 * r.coref_avg_f1 << "\n";
  row("re", r.re);
  row("re_ign", r.re_ign);
  out << "documents: " << r.documents << "\n";
  return out.str();
}

}  // namespace docie::harness

namespace docie::harness {

namespace {

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

bool is_canonical(const nlohmann::json& root) {
  return root.is_object() && root.value("format", "") == "docie-corpus";
}

void assign_dwie_splits(DataSplits& data, std::vector<corpus::Document> docs) {
  for (auto& d : docs) {
    const std::string split = d.metadata.value("split", "train");
    (split == "test" ? data.test : data.train).push_back(std::move(d));
  }
}

}  // namespace

DataSplits load_data(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  DataSplits data;
  if (!fs::exists(path)) throw ParseError("data path not found: " + path.string());
  if (fs::is_directory(path)) {
    if (fs::exists(path / "train_annotated.json")) {
      data.format = "docred";
      auto train = corpus::load_docred(path / "train_annotated.json");
      data.schema = train.schema;
      data.train = std::move(train.documents);
      if (fs::exists(path / "dev.json"))
        data.dev = corpus::load_docred(path / "dev.json", data.schema).documents;
      if (fs::exists(path / "test.json"))
        data.test = corpus::load_docred(path / "test.json", data.schema).documents;
      return data;
    }
    if (fs::exists(path / "train.json") && is_canonical(read_json(path / "train.json"))) {
      data.format = "canonical";
      auto train = corpus::load_canonical(path / "train.json");
      data.schema = train.schema;
      data.train = std::move(train.documents);
      for (auto [name, target] : {std::pair{"dev.json", &data.dev}, {"test.json", &data.test}})
        if (fs::exists(path / name)) {
          auto part = corpus::load_canonical(path / name);
          if (!(part.schema == data.schema))
            throw ParseError(std::string(name) + ": relation schema differs from train.json");
          *target = std::move(part.documents);
        }
      return data;
    }
    data.format = "dwie";
    auto all = corpus::load_dwie(path);
    data.schema = all.schema;
    assign_dwie_splits(data, std::move(all.documents));
    return data;
  }

  const nlohmann::json root = read_json(path);
  if (is_canonical(root)) {
    data.format = "canonical";
    auto c = corpus::corpus_from_json(root);
    data.schema = c.schema;
    data.train = std::move(c.documents);
  } else if (root.is_array() && !root.empty() && root.front().contains("vertexSet")) {
    data.format = "docred";
    auto c = corpus::load_docred(path);
    data.schema = c.schema;
    data.train = std::move(c.documents);
  } else if ((root.is_object() && root.contains("concepts")) ||
             (root.is_array() && !root.empty() && root.front().contains("concepts"))) {
    data.format = "dwie";
    auto c = corpus::load_dwie(path);
    data.schema = c.schema;
    assign_dwie_splits(data, std::move(c.documents));
  } else {
    throw ParseError("unrecognised corpus format: " + path.string());
  }
  return data;
}

void ensure_dev(DataSplits& data, const SettingConfig& config) {
  if (!data.dev.empty()) return;
  if (config.dev_fraction <= 0.0 || data.train.size() < 2) {
    data.dev = data.train;
    return;
  }
  auto split = corpus::holdout_split(data.train, config.dev_fraction, config.split_seed);
  data.train = std::move(split.train);
  data.dev = std::move(split.dev);
}

}  // namespace docie::harness
