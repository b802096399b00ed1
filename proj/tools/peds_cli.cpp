// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <omp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "peds/error.hpp"
#include "peds/fidelity.hpp"
#include "peds/harness.hpp"
#include "peds/model.hpp"
#include "peds/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace peds;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitSolver = 3;

struct Options {
  std::string family = "fourier16";
  int n = 1000;
  std::uint64_t seed = 0;
  int resolution = 0;
  std::string loss;  // empty: family default
  int ensemble = 0;  // 0: default for the command
  std::string out;
  std::string config;
  int threads = 0;

  // training
  int epochs = -1;  // negative: family default
  double lr = -1.0;
  int batch = 64;
  int patience = 50;
  double wallclock = 0.0;
  std::string model_kind = "peds";
  std::string data;
  std::string log;
  std::string data_dir;
  std::string stream = "train";
  int n_test = kDefaultTestSize;

  // evaluation and prediction
  std::string model;
  std::string baseline;
  std::vector<double> widths;
  int freq = -1;

  // active learning
  int n_init = 64;
  int iterations = 10;
  int m = 4;
  int k = 32;
  bool cold_start = false;
  int retrain_epochs = -1;
  std::string data_out;
  int budget = kDefaultAlBudget;
  std::vector<std::uint64_t> seeds;

  std::string table;
};

template <typename T>
void set_from(const json& j, T& field) {
  field = j.get<T>();
}

// Config-file values override command-line flags.
void apply_config(Options& o) {
  if (o.config.empty()) return;
  std::ifstream is(o.config);
  if (!is) throw ValidationError("cannot read config file " + o.config);
  json cfg;
  try {
    cfg = json::parse(is);
  } catch (const json::exception& e) {
    throw ValidationError("config file is not valid JSON: " + std::string(e.what()));
  }
  if (!cfg.is_object()) throw ValidationError("config file must contain a JSON object");
  const std::map<std::string, std::function<void(const json&)>> setters = {
      {"family", [&](const json& v) { set_from(v, o.family); }},
      {"n", [&](const json& v) { set_from(v, o.n); }},
      {"seed", [&](const json& v) { set_from(v, o.seed); }},
      {"resolution", [&](const json& v) { set_from(v, o.resolution); }},
      {"loss", [&](const json& v) { set_from(v, o.loss); }},
      {"ensemble", [&](const json& v) { set_from(v, o.ensemble); }},
      {"out", [&](const json& v) { set_from(v, o.out); }},
      {"threads", [&](const json& v) { set_from(v, o.threads); }},
      {"epochs", [&](const json& v) { set_from(v, o.epochs); }},
      {"lr", [&](const json& v) { set_from(v, o.lr); }},
      {"batch", [&](const json& v) { set_from(v, o.batch); }},
      {"patience", [&](const json& v) { set_from(v, o.patience); }},
      {"wallclock", [&](const json& v) { set_from(v, o.wallclock); }},
      {"model_kind", [&](const json& v) { set_from(v, o.model_kind); }},
      {"data", [&](const json& v) { set_from(v, o.data); }},
      {"log", [&](const json& v) { set_from(v, o.log); }},
      {"data_dir", [&](const json& v) { set_from(v, o.data_dir); }},
      {"stream", [&](const json& v) { set_from(v, o.stream); }},
      {"n_test", [&](const json& v) { set_from(v, o.n_test); }},
      {"model", [&](const json& v) { set_from(v, o.model); }},
      {"baseline", [&](const json& v) { set_from(v, o.baseline); }},
      {"widths", [&](const json& v) { set_from(v, o.widths); }},
      {"freq", [&](const json& v) { set_from(v, o.freq); }},
      {"n_init", [&](const json& v) { set_from(v, o.n_init); }},
      {"iterations", [&](const json& v) { set_from(v, o.iterations); }},
      {"m", [&](const json& v) { set_from(v, o.m); }},
      {"k", [&](const json& v) { set_from(v, o.k); }},
      {"cold_start", [&](const json& v) { set_from(v, o.cold_start); }},
      {"retrain_epochs", [&](const json& v) { set_from(v, o.retrain_epochs); }},
      {"data_out", [&](const json& v) { set_from(v, o.data_out); }},
      {"budget", [&](const json& v) { set_from(v, o.budget); }},
      {"seeds", [&](const json& v) { set_from(v, o.seeds); }},
  };
  for (const auto& [key, value] : cfg.items()) {
    std::string name = key;
    std::replace(name.begin(), name.end(), '-', '_');
    const auto it = setters.find(name);
    if (it == setters.end()) throw ValidationError("unknown config key '" + key + "'");
    try {
      it->second(value);
    } catch (const json::exception&) {
      throw ValidationError("config key '" + key + "' has the wrong type");
    }
  }
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError(message);
}

TrainConfig train_config(const Options& o, Family family) {
  TrainConfig tc = default_train_config(family);
  if (!o.loss.empty()) tc.loss = LossConfig::parse(o.loss);
  if (o.epochs >= 0) tc.epochs = o.epochs;
  if (o.lr > 0.0) tc.learning_rate = o.lr;
  tc.batch_size = o.batch;
  tc.patience = o.patience;
  tc.wallclock_limit = o.wallclock;
  tc.seed = o.seed;
  return tc;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot read " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + " is not valid JSON: " + e.what());
  }
}

// JSON-lines sink for training logs.
class JsonLines {
 public:
  explicit JsonLines(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    os_.open(path, std::ios::binary);
    if (!os_) throw ValidationError("cannot write " + path.string());
  }
  void write(const json& j) {
    os_ << j.dump() << '\n';
    os_.flush();
  }

 private:
  std::ofstream os_;
};

fs::path with_suffix(const std::string& base, const std::string& suffix) {
  fs::path p(base);
  p.replace_extension();
  p += suffix;
  return p;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const Options& o) {
  require(!o.out.empty(), "gen-data needs --out");
  GenDataConfig cfg{parse_family(o.family), o.n, o.resolution, o.seed, o.stream};
  const auto d = gen_data(cfg);
  save_dataset(o.out, d);
  double total = 0.0;
  for (double s : d.point_seconds) total += s;
  std::cout << json{{"out", o.out},
                    {"family", family_name(d.meta.family)},
                    {"count", d.samples.size()},
                    {"hf_resolution", d.meta.hf_resolution},
                    {"resampled", d.meta.resampled},
                    {"mean_seconds_per_point", total / static_cast<double>(d.point_seconds.size())}}
                   .dump()
            << '\n';
  return kExitOk;
}

int cmd_train(const Options& o) {
  require(!o.data.empty(), "train needs --data");
  require(!o.out.empty(), "train needs --out");
  require(o.ensemble >= 0, "--ensemble must be >= 0");
  const auto data = load_dataset(o.data);
  const auto family = data.meta.family;
  auto tc = train_config(o, family);
  const fs::path log_path = o.log.empty() ? with_suffix(o.out, ".train.jsonl") : fs::path(o.log);
  JsonLines log(log_path);
  int member = -1;
  tc.on_epoch = [&](const EpochRecord& r) {
    if (r.epoch == 0) ++member;
    json j = r;
    j["member"] = member;
    log.write(j);
  };
  ModelFactory factory;
  if (o.model_kind == "peds") {
    factory = [&](std::uint64_t s) { return std::make_unique<PedsModel>(family, NetworkOptions{}, s); };
  } else if (o.model_kind == "nn_only") {
    factory = [&](std::uint64_t s) { return std::make_unique<MlpSurrogate>(family, NetworkOptions{}, s); };
  } else {
    throw ValidationError("--model-kind must be peds or nn_only");
  }
  std::vector<TrainResult> results;
  const auto ensemble = train_ensemble(factory, data.samples, tc, o.ensemble > 0 ? o.ensemble : kDefaultEnsembleSize, &results);
  write_json(o.out, ensemble.to_json());
  json members = json::array();
  bool aborted = false;
  for (const auto& r : results) {
    members.push_back({{"best_epoch", r.best_epoch},
                       {"best_val_loss", r.best_val_loss},
                       {"train_loss", r.train_loss},
                       {"reverted_to_lf", r.reverted_to_lf},
                       {"aborted", r.aborted},
                       {"diagnostics", r.diagnostics}});
    aborted = aborted || r.aborted;
  }
  std::cout << json{{"out", o.out}, {"log", log_path.string()}, {"members", members}}.dump() << '\n';
  if (aborted) {
    std::cerr << "training aborted on a non-finite loss; the checkpoint holds the last good parameters\n";
    return kExitSolver;
  }
  return kExitOk;
}

Ensemble load_model(const Options& o) {
  if (!o.baseline.empty()) {
    require(o.baseline == "low_fidelity", "--baseline must be low_fidelity");
    Ensemble e;
    e.add(std::make_unique<LowFidelityBaseline>(parse_family(o.family)));
    return e;
  }
  require(!o.model.empty(), "--model (or --baseline low_fidelity) is required");
  return Ensemble::from_json(read_json(o.model));
}

int cmd_eval(const Options& o) {
  require(!o.data.empty(), "eval needs --data");
  const auto test = load_dataset(o.data);
  auto opts = o;
  if (!o.baseline.empty()) opts.family = family_name(test.meta.family);
  const auto model = load_model(opts);
  for (std::size_t i = 0; i < model.size(); ++i) {
    require(model.member(i).family() == test.meta.family, "model and dataset families differ");
  }
  const std::string name = model.empty() ? "unknown" : model.member(0).kind();
  const auto report = evaluate(name, model, test, 0);
  const auto j = report.to_json();
  if (!o.out.empty()) write_json(o.out, j);
  std::cout << json{{"model", name}, {"fractional_error", j["fractional_error"]}, {"test_size", report.test_size}}.dump()
            << '\n';
  return kExitOk;
}

int cmd_predict(const Options& o) {
  const auto model = load_model(o);
  require(!model.empty(), "model has no members");
  const auto family = model.member(0).family();
  std::vector<GeometryParams> inputs;
  if (!o.data.empty()) {
    for (const auto& s : load_dataset(o.data).samples) inputs.push_back(s.params);
  } else {
    GeometryParams p;
    p.family = family;
    p.widths = o.widths;
    if (o.freq >= 0) p.freq_index = o.freq;
    p.validate();
    inputs.push_back(p);
  }
  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!o.out.empty()) {
    file.open(o.out, std::ios::binary);
    require(static_cast<bool>(file), "cannot write " + o.out);
    os = &file;
  }
  for (const auto& p : inputs) {
    const auto pred = ensemble_predict(model, p);
    *os << json{{"params", p}, {"mean", pred.mean}, {"variance", pred.variance}}.dump() << '\n';
  }
  return kExitOk;
}

AlConfig al_config(const Options& o, Family family) {
  AlConfig al;
  al.n_init = o.n_init;
  al.iterations = o.iterations;
  al.m = o.m;
  al.k = o.k;
  al.ensemble_size = o.ensemble > 0 ? o.ensemble : kDefaultAlEnsembleSize;
  al.warm_start = !o.cold_start;
  al.initial_training = train_config(o, family);
  al.retraining = al.initial_training;
  al.retraining.epochs = o.retrain_epochs >= 0 ? o.retrain_epochs : default_retrain_epochs(family);
  return al;
}

int cmd_active_learn(const Options& o) {
  require(!o.out.empty(), "active-learn needs --out");
  const auto family = parse_family(o.family);
  auto al = al_config(o, family);
  OracleCache oracle(o.resolution);
  const auto result = active_learn(
      al, family, [&](std::uint64_t s) { return std::make_unique<PedsModel>(family, NetworkOptions{}, s); },
      [&](const GeometryParams& p) { return oracle(p); }, o.seed);
  write_json(o.out, result.ensemble.to_json());
  const fs::path log_path = o.log.empty() ? with_suffix(o.out, ".acquisitions.jsonl") : fs::path(o.log);
  JsonLines log(log_path);
  for (const auto& a : result.log) log.write(a);
  if (!o.data_out.empty()) {
    Dataset d;
    d.meta = {family, o.resolution > 0 ? o.resolution : family_info(family).hf_resolution, o.seed, "active-learning",
              kSolverVersion, result.skipped};
    d.samples = result.dataset;
    save_dataset(o.data_out, d);
  }
  std::cout << json{{"out", o.out},
                    {"log", log_path.string()},
                    {"al", al},
                    {"dataset_size", result.dataset.size()},
                    {"sizes", result.sizes},
                    {"skipped", result.skipped}}
                   .dump()
            << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

std::vector<Family> table_families(const Options& o, const std::vector<Family>& defaults) {
  if (o.family.empty() || o.family == "all") return defaults;
  std::vector<Family> out;
  std::stringstream ss(o.family);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_family(item));
  return out;
}

std::string csv_value(const json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return v.get<std::string>();
  std::ostringstream os;
  os.precision(6);
  os << v.get<double>();
  return os.str();
}

void write_csv(const fs::path& path, const std::vector<std::string>& columns, const json& rows) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + path.string());
  for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? "," : "") << columns[c];
  os << '\n';
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      os << (c ? "," : "") << (row.contains(columns[c]) ? csv_value(row[columns[c]]) : "");
    }
    os << '\n';
  }
}

int reproduce_static(const Options& o, const std::string& table) {
  const fs::path out = o.out.empty() ? fs::path("reproduce_" + table) : fs::path(o.out);
  const auto families = table_families(o, {Family::Fourier16, Family::Fourier25, Family::Fisher16, Family::Fisher25});
  json rows = json::array();
  bool failed = false;
  for (const auto family : families) {
    ExperimentConfig cfg;
    cfg.family = family;
    cfg.n_train = o.n;
    cfg.n_test = o.n_test;
    cfg.seed = o.seed;
    cfg.resolution = o.resolution;
    cfg.ensemble = o.ensemble > 0 ? o.ensemble : kDefaultEnsembleSize;
    cfg.train = train_config(o, family);
    cfg.run_nn_only = table == "table2";
    if (!o.data_dir.empty()) cfg.data_dir = fs::path(o.data_dir);
    const fs::path dir = out / family_name(family);
    fs::create_directories(dir);
    JsonLines log(dir / "train_log.jsonl");
    cfg.on_epoch = [&](const std::string& model, int member, const EpochRecord& r) {
      json j = r;
      j["model"] = model;
      j["member"] = member;
      log.write(j);
    };
    std::cerr << "[" << table << "] " << family_name(family) << ": n=" << cfg.n_train << " seed=" << cfg.seed << '\n';
    const auto result = run_experiment(cfg);
    write_json(dir / "low_fidelity_report.json", result.low_fidelity.to_json());
    if (result.peds) write_json(dir / "peds_report.json", result.peds->to_json());
    if (result.nn_only) write_json(dir / "nn_only_report.json", result.nn_only->to_json());
    if (result.peds_model) write_json(dir / "peds_model.json", result.peds_model->to_json());
    write_json(dir / "timing.json", result.timing);
    auto row = result.summary();
    if (table == "table3") {
      row["speedup"] = result.timing.value("speedup_lf", json(nullptr));
    }
    failed = failed || (result.peds && result.peds->status != "ok") || (result.nn_only && result.nn_only->status != "ok");
    rows.push_back(row);
  }
  write_json(out / (table + ".json"), rows);
  const std::vector<std::string> columns =
      table == "table2" ? std::vector<std::string>{"family", "n_train", "peds_fe", "nn_only_fe", "low_fidelity_fe", "w_mean"}
                        : std::vector<std::string>{"family", "n_train", "low_fidelity_fe", "peds_fe", "improvement", "speedup"};
  write_csv(out / (table + ".csv"), columns, rows);
  std::cout << rows.dump(2) << '\n';
  return failed ? kExitSolver : kExitOk;
}

int reproduce_maxwell(const Options& o) {
  const fs::path out = o.out.empty() ? fs::path("reproduce_maxwell") : fs::path(o.out);
  AlExperimentConfig cfg;
  cfg.family = Family::Maxwell10;
  cfg.budget = o.budget;
  cfg.al = al_config(o, Family::Maxwell10);
  cfg.n_test = o.n_test;
  cfg.test_seed = o.seed;
  if (!o.seeds.empty()) cfg.seeds = o.seeds;
  if (!o.data_dir.empty()) cfg.data_dir = fs::path(o.data_dir);
  cfg.progress = [](const std::string& msg) { std::cerr << "[maxwell] " << msg << '\n'; };
  const auto result = run_al_experiment(cfg);
  fs::create_directories(out);
  write_json(out / "low_fidelity_report.json", result.low_fidelity.to_json());
  for (const auto& run : result.runs) {
    const auto dir = out / ("seed_" + std::to_string(run.seed));
    write_json(dir / "peds_al_report.json", run.al.to_json());
    write_json(dir / "peds_random_report.json", run.random.to_json());
    if (run.nn_only) write_json(dir / "nn_only_report.json", run.nn_only->to_json());
    JsonLines log(dir / "acquisitions.jsonl");
    for (const auto& a : run.al_log) log.write(a);
  }
  const auto summary = result.summary();
  write_json(out / "maxwell.json", summary);
  write_csv(out / "maxwell.csv", {"seed", "al_fe", "random_fe", "nn_only_fe"}, summary["runs"]);
  std::cout << summary.dump(2) << '\n';
  return kExitOk;
}

int cmd_reproduce(const Options& o) {
  if (o.table == "table2" || o.table == "table3") return reproduce_static(o, o.table);
  if (o.table == "maxwell") return reproduce_maxwell(o);
  throw ValidationError("unknown table '" + o.table + "' (expected table2, table3 or maxwell)");
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--family", o.family, "fourier16 | fourier25 | fisher16 | fisher25 | maxwell10");
  cmd->add_option("--seed", o.seed, "Random seed");
  cmd->add_option("--out", o.out, "Output path");
  cmd->add_option("--config", o.config, "JSON file whose keys override the flags");
  cmd->add_option("--threads", o.threads, "OpenMP threads (0: runtime default)");
}

void add_training(CLI::App* cmd, Options& o) {
  cmd->add_option("--loss", o.loss, "huber | nll (default: per family)");
  cmd->add_option("--ensemble", o.ensemble, "Ensemble size (0: 5 for training, 3 for active learning)");
  cmd->add_option("--epochs", o.epochs, "Maximum epochs (default: per family)");
  cmd->add_option("--lr", o.lr, "Adam learning rate (default: per family)");
  cmd->add_option("--batch", o.batch, "Minibatch size");
  cmd->add_option("--patience", o.patience, "Early-stopping patience in epochs");
  cmd->add_option("--wallclock", o.wallclock, "Per-model training time cap in seconds (0: none)");
}

void add_al(CLI::App* cmd, Options& o) {
  cmd->add_option("--n-init", o.n_init, "Initial random points");
  cmd->add_option("--iterations", o.iterations, "Acquisition iterations (T)");
  cmd->add_option("--m", o.m, "Candidate multiplier (M)");
  cmd->add_option("--k", o.k, "Points acquired per iteration (K)");
  cmd->add_flag("--cold-start", o.cold_start, "Retrain from scratch after each acquisition");
  cmd->add_option("--retrain-epochs", o.retrain_epochs, "Epochs per warm-start retraining");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Physics-enhanced deep surrogates: data generation, training, evaluation"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-data", "Generate a high-fidelity dataset (JSON lines)");
  add_common(gen, o);
  gen->add_option("--n", o.n, "Number of points");
  gen->add_option("--resolution", o.resolution, "High-fidelity resolution (0: family default)");
  gen->add_option("--stream", o.stream, "Seed stream name (train, test, ...)");

  auto* train_cmd = app.add_subcommand("train", "Train a PEDS or NN-only ensemble");
  add_common(train_cmd, o);
  add_training(train_cmd, o);
  train_cmd->add_option("--data", o.data, "Training dataset (JSON lines)");
  train_cmd->add_option("--model-kind", o.model_kind, "peds | nn_only");
  train_cmd->add_option("--log", o.log, "Training log (JSON lines)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  add_common(eval, o);
  eval->add_option("--model", o.model, "Checkpoint");
  eval->add_option("--baseline", o.baseline, "low_fidelity: evaluate the coarse solver alone");
  eval->add_option("--data", o.data, "Test dataset (JSON lines)");

  auto* al = app.add_subcommand("active-learn", "Grow a training set by ensemble uncertainty");
  add_common(al, o);
  add_training(al, o);
  add_al(al, o);
  al->add_option("--resolution", o.resolution, "High-fidelity resolution (0: family default)");
  al->add_option("--log", o.log, "Acquisition log (JSON lines)");
  al->add_option("--data-out", o.data_out, "Write the acquired dataset here");

  auto* predict = app.add_subcommand("predict", "Predict with a checkpoint");
  add_common(predict, o);
  predict->add_option("--model", o.model, "Checkpoint");
  predict->add_option("--baseline", o.baseline, "low_fidelity: use the coarse solver alone");
  predict->add_option("--widths", o.widths, "Hole widths as fractions of the pitch")->delimiter(',');
  predict->add_option("--freq", o.freq, "Frequency index (maxwell10)");
  predict->add_option("--data", o.data, "Predict every point of a dataset instead");

  auto* reproduce = app.add_subcommand("reproduce", "Regenerate a results table");
  add_common(reproduce, o);
  add_training(reproduce, o);
  add_al(reproduce, o);
  reproduce->add_option("table", o.table, "table2 | table3 | maxwell")->required();
  reproduce->add_option("--n", o.n, "Training points per family");
  reproduce->add_option("--n-test", o.n_test, "Test points per family");
  reproduce->add_option("--resolution", o.resolution, "High-fidelity resolution (0: family default)");
  reproduce->add_option("--data-dir", o.data_dir, "Dataset cache directory");
  reproduce->add_option("--budget", o.budget, "Points per active-learning run (maxwell)");
  reproduce->add_option("--seeds", o.seeds, "Seeds for the maxwell comparison")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }
  if (reproduce->parsed() && reproduce->get_option("--family")->count() == 0) o.family = "all";

  try {
    apply_config(o);
    if (o.threads > 0) omp_set_num_threads(o.threads);
    if (gen->parsed()) return cmd_gen_data(o);
    if (train_cmd->parsed()) return cmd_train(o);
    if (eval->parsed()) return cmd_eval(o);
    if (al->parsed()) return cmd_active_learn(o);
    if (predict->parsed()) return cmd_predict(o);
    if (reproduce->parsed()) return cmd_reproduce(o);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kExitSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitValidation;
}
