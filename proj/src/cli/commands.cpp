#include "lorekt/cli/commands.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <fstream>
#include <iostream>
#include <iterator>

#include "lorekt/common/error.hpp"
#include "lorekt/common/hashing.hpp"
#include "lorekt/common/logging.hpp"
#include "lorekt/data/dataset_io.hpp"
#include "lorekt/data/vocab.hpp"
#include "lorekt/eval/evaluate.hpp"
#include "lorekt/importance/importance.hpp"
#include "lorekt/train/checkpoint.hpp"

namespace lorekt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  Sha256 h;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h.update(std::string_view(buf, static_cast<std::size_t>(in.gcount())));
  }
  const Digest d = h.finish();
  return to_hex(d);
}

// Short content address of a canonical JSON document.
std::string content_key(const json& inputs) {
  const Digest d = sha256(inputs.dump());
  return to_hex(d).substr(0, 16);
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw DataError(what + " not found: " + path.string());
}

json options_json(const data::PreprocessOptions& o) {
  return {{"min_length", o.min_length},
          {"max_length", o.max_length},
          {"trainval_fraction", o.trainval_fraction},
          {"train_fraction", o.train_fraction}};
}

struct Prepared {
  data::DatasetSpec spec;
  std::string key;
  fs::path dir;
  data::VocabSize size;
  data::Splits splits;
};

std::uint64_t preprocess_seed(const ExperimentConfig& c, const data::DatasetSpec& spec) {
  return derive_seed(c.seed, "preprocess/" + spec.name);
}

std::string prepared_key(const ExperimentConfig& c, const data::DatasetSpec& spec) {
  require_file(spec.path, "dataset file for '" + spec.name + "'");
  return content_key({{"source_sha256", file_digest(spec.path)},
                      {"name", spec.name},
                      {"dataset_index", spec.dataset_index},
                      {"options", options_json(c.preprocess)},
                      {"seed", preprocess_seed(c, spec)}});
}

fs::path prepared_dir(const ExperimentConfig& c, const std::string& key, const std::string& name) {
  return c.workdir / "preprocess" / key / name;
}

Prepared load_prepared(const ExperimentConfig& c, const DatasetEntry& entry) {
  Prepared p;
  p.spec = entry.spec;
  p.key = prepared_key(c, entry.spec);
  p.dir = prepared_dir(c, p.key, entry.spec.name);
  const fs::path meta_path = p.dir / "meta.json";
  if (!fs::is_regular_file(meta_path)) {
    throw DataError("dataset '" + entry.spec.name + "' has not been preprocessed with the current inputs (expected " +
                    p.dir.string() + "); run `lorekt preprocess` first");
  }
  std::ifstream in(meta_path);
  json meta;
  try {
    in >> meta;
    p.size = {meta.at("vocab_size").at("n_questions").get<std::size_t>(),
              meta.at("vocab_size").at("n_kcs").get<std::size_t>()};
  } catch (const json::exception& e) {
    throw DataError("corrupted " + meta_path.string() + ": " + e.what());
  }
  p.splits.train = data::ingest(p.dir / "train.txt", entry.spec);
  p.splits.valid = data::ingest(p.dir / "valid.txt", entry.spec);
  p.splits.test = data::ingest(p.dir / "test.txt", entry.spec);
  return p;
}

const DatasetEntry& required_dataset(const ExperimentConfig& c, const CommandOptions& o) {
  if (!o.dataset) throw ConfigError("--dataset is required");
  return c.dataset(*o.dataset);
}

const fs::path& required_checkpoint(const CommandOptions& o) {
  if (!o.checkpoint) throw ConfigError("--checkpoint is required");
  require_file(*o.checkpoint, "checkpoint");
  return *o.checkpoint;
}

// Loads the checkpoint and extends it with the dataset when it is new to the
// model. The adaptation seed depends only on the experiment seed and dataset,
// so importance, finetune and eval see the same adapted model.
model::LoReKTModel<float> model_for(const ExperimentConfig& c, const train::Checkpoint& ckpt, const Prepared& p) {
  auto m = ckpt.to_model<float>();
  if (m.vocab().contains(p.spec.dataset_index)) {
    if (m.vocab().entry(p.spec.dataset_index).name != p.spec.name) {
      throw DataError("checkpoint assigns dataset_index " + std::to_string(p.spec.dataset_index) + " to '" +
                      m.vocab().entry(p.spec.dataset_index).name + "', config names it '" + p.spec.name + "'");
    }
    return m;
  }
  logger()->info("zero-shot adapting checkpoint to dataset '{}'", p.spec.name);
  return m.zero_shot_adapt(p.spec, p.size, derive_seed(c.seed, "adapt/" + p.spec.name));
}

std::vector<data::DatasetSpec> with_spec(std::vector<data::DatasetSpec> specs, const data::DatasetSpec& spec) {
  for (const auto& s : specs) {
    if (s.dataset_index == spec.dataset_index) return specs;
  }
  specs.push_back(spec);
  return specs;
}

std::vector<eval::MetricsReport> report_splits(model::LoReKTModel<float>& m, const Prepared& p) {
  std::vector<eval::MetricsReport> out;
  out.push_back(eval::evaluate_split(m, p.splits.valid, p.spec, "valid"));
  out.push_back(eval::evaluate_split(m, p.splits.test, p.spec, "test"));
  return out;
}

json history_json(const std::vector<train::EpochRecord>& history) {
  json h = json::array();
  for (const auto& e : history) {
    h.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_auc", e.val_auc}, {"steps", e.steps}});
  }
  return h;
}

}  // namespace

ExperimentConfig load_config(const CommandOptions& options) {
  std::ifstream in(options.config);
  if (!in) throw ConfigError("cannot open config " + options.config.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + options.config.string() + " is not valid JSON: " + e.what());
  }
  if (options.seed) {
    if (!j.is_object()) throw ConfigError("config: expected an object");
    j["seed"] = *options.seed;
  }
  return ExperimentConfig::parse(j, fs::absolute(options.config).parent_path());
}

json run_synth(const ExperimentConfig& c, const CommandOptions& o) {
  struct Job {
    std::string name;
    data::SyntheticConfig cfg;
    fs::path out;
  };
  std::vector<Job> jobs;
  if (o.dataset) {
    const auto& e = c.dataset(*o.dataset);
    const auto& cfg = e.synthetic ? e.synthetic : c.synthetic;
    if (!cfg) throw ConfigError("dataset '" + e.spec.name + "' has no synthetic block and no top-level default");
    jobs.push_back({e.spec.name, *cfg, o.out ? *o.out : fs::path(e.spec.path)});
  } else if (o.out) {
    if (!c.synthetic) throw ConfigError("--out without --dataset needs a top-level synthetic block");
    jobs.push_back({"synthetic", *c.synthetic, *o.out});
  } else {
    for (const auto& e : c.datasets) {
      if (e.synthetic) jobs.push_back({e.spec.name, *e.synthetic, e.spec.path});
    }
    if (jobs.empty()) throw ConfigError("no dataset has a synthetic block");
  }

  json outputs = json::array();
  for (const auto& job : jobs) {
    const auto ds = data::generate_synthetic(job.cfg);
    data::write_dataset(job.out, ds.sequences);
    fs::path truth = job.out;
    truth += ".truth.json";
    write_json(truth, data::ground_truth_json(job.cfg, ds));
    std::size_t n = 0;
    for (const auto& s : ds.sequences) n += s.size();
    outputs.push_back({{"dataset", job.name},
                       {"path", job.out.string()},
                       {"ground_truth", truth.string()},
                       {"students", ds.sequences.size()},
                       {"interactions", n}});
    logger()->info("synthesized '{}' ({} students, {} interactions) to {}", job.name, ds.sequences.size(), n,
                   job.out.string());
  }
  return {{"outputs", outputs}};
}

json run_preprocess(const ExperimentConfig& c, const CommandOptions& o) {
  std::vector<const DatasetEntry*> entries;
  if (o.dataset) {
    entries.push_back(&c.dataset(*o.dataset));
  } else {
    for (const auto& e : c.datasets) entries.push_back(&e);
  }
  for (const auto* e : entries) require_file(e->spec.path, "dataset file for '" + e->spec.name + "'");

  json outputs = json::array();
  for (const auto* e : entries) {
    const auto raw = data::ingest(e->spec.path, e->spec);
    const auto splits = data::preprocess(raw, preprocess_seed(c, e->spec), c.preprocess);
    const std::string key = prepared_key(c, e->spec);
    const fs::path dir = prepared_dir(c, key, e->spec.name);
    data::write_dataset(dir / "train.txt", splits.train);
    data::write_dataset(dir / "valid.txt", splits.valid);
    data::write_dataset(dir / "test.txt", splits.test);
    const auto size = data::id_extent(raw);
    write_json(dir / "meta.json", {{"name", e->spec.name},
                                   {"dataset_index", e->spec.dataset_index},
                                   {"source", e->spec.path},
                                   {"source_sha256", file_digest(e->spec.path)},
                                   {"options", options_json(c.preprocess)},
                                   {"seed", preprocess_seed(c, e->spec)},
                                   {"vocab_size", {{"n_questions", size.n_questions}, {"n_kcs", size.n_kcs}}},
                                   {"segments",
                                    {{"train", splits.train.size()},
                                     {"valid", splits.valid.size()},
                                     {"test", splits.test.size()}}}});
    outputs.push_back({{"dataset", e->spec.name},
                       {"dir", dir.string()},
                       {"train", splits.train.size()},
                       {"valid", splits.valid.size()},
                       {"test", splits.test.size()}});
  }
  return {{"outputs", outputs}};
}

json run_pretrain(const ExperimentConfig& c, const CommandOptions& o) {
  const auto rich = c.rich();
  if (rich.empty()) throw ConfigError("pretrain needs at least one dataset with role \"rich\"");
  std::vector<Prepared> prepared;
  for (const auto* e : rich) prepared.push_back(load_prepared(c, *e));

  std::vector<data::DatasetSpec> specs;
  std::vector<data::VocabSize> sizes;
  json keys = json::array();
  for (const auto& p : prepared) {
    specs.push_back(p.spec);
    sizes.push_back(p.size);
    keys.push_back(p.key);
  }
  const auto vocab = data::GlobalVocab::build(specs, sizes);
  const auto mc = c.model.with_vocab(vocab);
  train::TrainConfig tc = c.train;
  tc.seed = derive_seed(c.seed, "pretrain");
  const std::string key =
      content_key({{"data", keys}, {"model", mc.to_json()}, {"train", tc.to_json()}, {"seed", c.seed}});

  auto m = model::LoReKTModel<float>::build(mc, vocab, derive_seed(c.seed, "pretrain/init"));
  logger()->info("pre-training {} parameters on {} datasets", m.parameter_count(), prepared.size());
  std::vector<train::TrainDataset> data;
  for (const auto& p : prepared) data.push_back({p.spec, p.splits.train, p.splits.valid});
  auto result = train::pretrain(std::move(m), data, tc);

  const fs::path out = o.out ? *o.out : c.checkpoints / "pretrain" / key / "model.lrkt";
  train::save(train::Checkpoint::from_model(result.model, specs,
                                            {"pretrain", result.best_epoch, result.best_val_auc, c.seed, result.steps}),
              out);
  std::vector<eval::MetricsReport> reports;
  for (const auto& p : prepared) {
    for (auto& r : report_splits(result.model, p)) reports.push_back(std::move(r));
  }
  const fs::path dir = out.parent_path();
  eval::write_reports(reports, dir / "report.json", dir / "report.csv");
  write_json(dir / "history.json", history_json(result.history));
  return {{"checkpoint", out.string()},
          {"report", (dir / "report.json").string()},
          {"best_epoch", result.best_epoch},
          {"best_val_auc", result.best_val_auc},
          {"epochs", result.epochs_run},
          {"steps", result.steps}};
}

json run_importance(const ExperimentConfig& c, const CommandOptions& o) {
  const auto& entry = required_dataset(c, o);
  const auto& ckpt_path = required_checkpoint(o);
  const auto p = load_prepared(c, entry);
  const auto ckpt = train::load(ckpt_path);
  auto m = model_for(c, ckpt, p);
  const auto profile = importance::compute_importance(m, p.splits.train, p.spec);
  const fs::path out = o.out ? *o.out
                             : c.workdir / "importance" /
                                   content_key({{"checkpoint", file_digest(ckpt_path)}, {"data", p.key},
                                                {"seed", c.seed}}) /
                                   "profile.json";
  profile.save(out);
  return {{"profile", out.string()}, {"dataset", p.spec.name}, {"n_samples", profile.n_samples},
          {"layers", profile.layers.size()}};
}

json run_finetune(const ExperimentConfig& c, const CommandOptions& o) {
  const auto& entry = required_dataset(c, o);
  const auto& ckpt_path = required_checkpoint(o);
  if (o.profile) require_file(*o.profile, "importance profile");
  const auto p = load_prepared(c, entry);
  const auto ckpt = train::load(ckpt_path);
  auto m = model_for(c, ckpt, p);
  std::optional<importance::ImportanceProfile> profile;
  if (o.profile) {
    profile = importance::ImportanceProfile::load(*o.profile);
    profile->check_complete(m.config());
  }

  train::TrainConfig tc = c.finetune_config();
  tc.seed = derive_seed(c.seed, "finetune/" + p.spec.name);
  const std::string key = content_key({{"checkpoint", file_digest(ckpt_path)},
                                       {"data", p.key},
                                       {"profile", o.profile ? file_digest(*o.profile) : "none"},
                                       {"train", tc.to_json()},
                                       {"seed", c.seed}});
  const train::TrainDataset data{p.spec, p.splits.train, p.splits.valid};
  auto result = train::finetune(std::move(m), data, tc, profile ? &*profile : nullptr);

  const fs::path out = o.out ? *o.out : c.checkpoints / "finetune" / key / "model.lrkt";
  train::save(train::Checkpoint::from_model(
                  result.model, with_spec(ckpt.datasets, p.spec),
                  {profile ? "finetune-importance" : "finetune", result.best_epoch, result.best_val_auc, c.seed,
                   result.steps}),
              out);
  const auto reports = report_splits(result.model, p);
  const fs::path dir = out.parent_path();
  eval::write_reports(reports, dir / "report.json", dir / "report.csv");
  write_json(dir / "history.json", history_json(result.history));
  return {{"checkpoint", out.string()},
          {"report", (dir / "report.json").string()},
          {"dataset", p.spec.name},
          {"importance", profile.has_value()},
          {"best_epoch", result.best_epoch},
          {"best_val_auc", result.best_val_auc},
          {"test_auc", reports[1].auc},
          {"test_accuracy", reports[1].accuracy}};
}

json run_eval(const ExperimentConfig& c, const CommandOptions& o) {
  const auto& ckpt_path = required_checkpoint(o);
  const auto ckpt = train::load(ckpt_path);
  std::vector<const DatasetEntry*> entries;
  if (o.dataset) {
    entries.push_back(&c.dataset(*o.dataset));
  } else {
    for (const auto& e : c.datasets) {
      if (ckpt.vocab.contains(e.spec.dataset_index)) entries.push_back(&e);
    }
    if (entries.empty()) throw DataError("no configured dataset is covered by the checkpoint; pass --dataset");
  }
  std::vector<Prepared> prepared;
  for (const auto* e : entries) prepared.push_back(load_prepared(c, *e));

  std::vector<eval::MetricsReport> reports;
  json keys = json::array();
  for (const auto& p : prepared) {
    auto m = model_for(c, ckpt, p);
    for (auto& r : report_splits(m, p)) reports.push_back(std::move(r));
    keys.push_back(p.key);
  }
  fs::path json_path = o.out ? *o.out
                             : c.workdir / "eval" /
                                   content_key({{"checkpoint", file_digest(ckpt_path)}, {"data", keys},
                                                {"seed", c.seed}}) /
                                   "report.json";
  fs::path csv_path = json_path;
  csv_path.replace_extension(".csv");
  eval::write_reports(reports, json_path, csv_path);
  json metrics = json::array();
  for (const auto& r : reports) {
    metrics.push_back({{"dataset", r.dataset}, {"split", r.split}, {"auc", r.auc}, {"accuracy", r.accuracy}});
  }
  return {{"report", json_path.string()}, {"csv", csv_path.string()}, {"metrics", metrics}};
}

int main(int argc, char** argv) {
  CLI::App app{"LoReKT knowledge-tracing pipeline"};
  app.require_subcommand(1);
  CommandOptions o;
  std::string checkpoint, profile, out, dataset;
  std::uint64_t seed = 0;

  struct Sub {
    const char* name;
    const char* help;
    json (*fn)(const ExperimentConfig&, const CommandOptions&);
  };
  const Sub subs[] = {{"synth", "generate a synthetic dataset and its ground-truth sidecar", run_synth},
                      {"preprocess", "filter, segment and split datasets into the workdir", run_preprocess},
                      {"pretrain", "pre-train on the rich datasets", run_pretrain},
                      {"importance", "compute the importance profile of a target dataset", run_importance},
                      {"finetune", "fine-tune a checkpoint on one dataset", run_finetune},
                      {"eval", "evaluate a checkpoint on valid and test splits", run_eval}};
  std::vector<std::pair<CLI::App*, const Sub*>> commands;
  for (const auto& s : subs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    std::string name = s.name;
    sub->add_option("--config", o.config, "experiment config (JSON)")->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--dataset", dataset, "dataset name from the config");
    sub->add_option("--out", out, "output path");
    if (name == "importance" || name == "finetune" || name == "eval") {
      sub->add_option("--checkpoint", checkpoint, "input checkpoint")->required();
    }
    if (name == "finetune") sub->add_option("--profile", profile, "importance profile (JSON)");
    commands.emplace_back(sub, &s);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  const Sub* chosen = nullptr;
  CLI::App* chosen_app = nullptr;
  for (auto& [sub, s] : commands) {
    if (sub->parsed()) {
      chosen = s;
      chosen_app = sub;
    }
  }
  auto given = [&](const char* flag) { return chosen_app->get_option_no_throw(flag) && chosen_app->count(flag) > 0; };
  if (given("--checkpoint")) o.checkpoint = checkpoint;
  if (given("--profile")) o.profile = profile;
  if (given("--out")) o.out = out;
  if (given("--dataset")) o.dataset = dataset;
  if (given("--seed")) o.seed = seed;

  const auto start = std::chrono::steady_clock::now();
  json summary = {{"command", chosen->name}};
  int code = kOk;
  try {
    const auto config = load_config(o);
    const json result = chosen->fn(config, o);
    for (const auto& [key, value] : result.items()) summary[key] = value;
    summary["status"] = "ok";
  } catch (const ConfigError& e) {
    code = kUsage;
    summary["error"] = e.what();
  } catch (const NumericalError& e) {
    code = kNumerical;
    summary["error"] = e.what();
  } catch (const std::exception& e) {
    code = kData;
    summary["error"] = e.what();
  }
  if (code != kOk) {
    summary["status"] = "error";
    summary["exit_code"] = code;
    logger()->error("{}: {}", chosen->name, summary["error"].get<std::string>());
  }
  summary["elapsed_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << summary.dump() << std::endl;
  return code;
}

}  // namespace lorekt::cli
