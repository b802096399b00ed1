// SPDX-License-Identifier: Apache-2.0

#include "peds/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "peds/error.hpp"
#include "peds/fidelity.hpp"
#include "peds/parallel.hpp"
#include "peds/random.hpp"

namespace peds {
namespace {

using Clock = std::chrono::steady_clock;
constexpr int kDatasetVersion = 1;

bool same_params(const GeometryParams& a, const GeometryParams& b) {
  if (a.family != b.family || a.freq_index != b.freq_index || a.widths.size() != b.widths.size()) return false;
  for (std::size_t i = 0; i < a.widths.size(); ++i) {
    if (std::abs(a.widths[i] - b.widths[i]) > 1e-12) return false;
  }
  return true;
}

nlohmann::json sample_json(const TrainingSample& s, std::size_t index) {
  nlohmann::json j{{"params", s.params}, {"meta", {{"index", index}}}};
  if (family_info(s.params.family).physics == Physics::Helmholtz) {
    j["target_re"] = std::vector<double>{s.target[0]};
    j["target_im"] = std::vector<double>{s.target[1]};
  } else {
    j["target_re"] = s.target;
  }
  return j;
}

TrainingSample sample_from_json(const nlohmann::json& j) {
  TrainingSample s;
  s.params = j.at("params").get<GeometryParams>();
  s.params.validate();
  const auto re = j.at("target_re").get<std::vector<double>>();
  if (j.contains("target_im")) {
    const auto im = j.at("target_im").get<std::vector<double>>();
    if (re.size() != im.size()) throw ValidationError("target_re and target_im differ in length");
    for (std::size_t c = 0; c < re.size(); ++c) {
      s.target.push_back(re[c]);
      s.target.push_back(im[c]);
    }
  } else {
    s.target = re;
  }
  return s;
}

std::filesystem::path timing_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".timing.json";
  return p;
}

std::vector<double> solve_target(const GeometryParams& p, int resolution, double& seconds) {
  const auto t0 = Clock::now();
  auto target = high_fidelity(p, resolution);
  seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  for (double v : target) {
    if (!std::isfinite(v)) throw SolverError("high-fidelity solve returned a non-finite target");
  }
  return target;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

void Dataset::validate() const {
  const auto dim = static_cast<std::size_t>(family_info(meta.family).target_dim);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.params.family != meta.family) throw ValidationError("dataset mixes families");
    if (s.target.size() != dim) throw ValidationError("dataset target has the wrong dimension");
    s.params.validate();
    for (std::size_t k = 0; k < i; ++k) {
      if (same_params(s.params, samples[k].params)) {
        throw ValidationError("duplicate parameter vector at samples " + std::to_string(k) + " and " +
                              std::to_string(i));
      }
    }
  }
}

void write_dataset(std::ostream& os, const Dataset& d) {
  const nlohmann::json header{{"format", "peds-dataset"},
                              {"version", kDatasetVersion},
                              {"family", family_name(d.meta.family)},
                              {"hf_resolution", d.meta.hf_resolution},
                              {"seed", d.meta.seed},
                              {"stream", d.meta.stream},
                              {"solver_version", d.meta.solver_version},
                              {"count", d.samples.size()},
                              {"resampled", d.meta.resampled},
                              {"target_dim", family_info(d.meta.family).target_dim}};
  os << header.dump() << '\n';
  for (std::size_t i = 0; i < d.samples.size(); ++i) os << sample_json(d.samples[i], i).dump() << '\n';
}

Dataset read_dataset(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ValidationError("dataset is empty");
  Dataset d;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.value("format", "") != "peds-dataset") throw ValidationError("missing dataset header");
    if (header.value("version", 0) != kDatasetVersion) throw ValidationError("unsupported dataset version");
    d.meta.family = parse_family(header.at("family").get<std::string>());
    d.meta.hf_resolution = header.at("hf_resolution").get<int>();
    d.meta.seed = header.at("seed").get<std::uint64_t>();
    d.meta.stream = header.at("stream").get<std::string>();
    d.meta.solver_version = header.at("solver_version").get<std::string>();
    d.meta.resampled = header.at("resampled").get<std::size_t>();
    const auto count = header.at("count").get<std::size_t>();
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      d.samples.push_back(sample_from_json(nlohmann::json::parse(line)));
    }
    if (d.samples.size() != count) throw ValidationError("dataset header count does not match its lines");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed dataset: ") + e.what());
  }
  d.validate();
  return d;
}

void save_dataset(const std::filesystem::path& path, const Dataset& d) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("cannot write " + path.string());
    write_dataset(os, d);
  }
  if (!d.point_seconds.empty()) {
    std::ofstream ts(timing_path(path), std::ios::binary);
    ts << nlohmann::json{{"point_seconds", d.point_seconds}, {"mean_seconds", mean(d.point_seconds)}}.dump() << '\n';
  }
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot read " + path.string());
  auto d = read_dataset(is);
  if (std::ifstream ts(timing_path(path)); ts) {
    try {
      d.point_seconds = nlohmann::json::parse(ts).at("point_seconds").get<std::vector<double>>();
    } catch (const nlohmann::json::exception&) {
      d.point_seconds.clear();
    }
  }
  return d;
}

Dataset gen_data(const GenDataConfig& cfg) {
  if (cfg.n < 1) throw ValidationError("--n must be >= 1");
  if (cfg.max_attempts < 1) throw ValidationError("max_attempts must be >= 1");
  const auto& info = family_info(cfg.family);
  const int resolution = cfg.resolution > 0 ? cfg.resolution : info.hf_resolution;
  if (resolution < info.lf_resolution) throw ValidationError("resolution below the low-fidelity resolution");

  struct Point {
    TrainingSample sample;
    double seconds = 0.0;
    std::size_t failures = 0;
  };
  const auto points = parallel_map<Point>(
      static_cast<std::size_t>(cfg.n),
      [&](std::size_t i) {
        Rng rng(derive_seed(cfg.seed, cfg.stream, i));
        Point pt;
        std::string last_error;
        for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
          auto p = sample_params(cfg.family, rng);
          try {
            pt.sample = {p, solve_target(p, resolution, pt.seconds)};
            return pt;
          } catch (const SolverError& e) {
            ++pt.failures;
            last_error = e.what();
          }
        }
        throw SolverError("point " + std::to_string(i) + " failed " + std::to_string(cfg.max_attempts) +
                          " times: " + last_error);
      },
      cfg.parallel);

  Dataset d;
  d.meta = {cfg.family, resolution, cfg.seed, cfg.stream, kSolverVersion, 0};
  for (const auto& pt : points) {
    d.samples.push_back(pt.sample);
    d.point_seconds.push_back(pt.seconds);
    d.meta.resampled += pt.failures;
  }
  d.validate();
  return d;
}

Dataset gen_data_for(Family family, const std::vector<GeometryParams>& params, int resolution, std::uint64_t seed,
                     bool parallel) {
  const auto& info = family_info(family);
  const int res = resolution > 0 ? resolution : info.hf_resolution;
  for (const auto& p : params) {
    if (p.family != family) throw ValidationError("parameter family does not match the dataset family");
    p.validate();
  }
  std::vector<double> seconds(params.size(), 0.0);
  const auto targets = parallel_map<std::vector<double>>(
      params.size(), [&](std::size_t i) { return solve_target(params[i], res, seconds[i]); }, parallel);
  Dataset d;
  d.meta = {family, res, seed, "fixed", kSolverVersion, 0};
  for (std::size_t i = 0; i < params.size(); ++i) d.samples.push_back({params[i], targets[i]});
  d.point_seconds = seconds;
  d.validate();
  return d;
}

Dataset cached_gen_data(const GenDataConfig& cfg, const std::optional<std::filesystem::path>& cache_dir) {
  if (!cache_dir) return gen_data(cfg);
  const auto& info = family_info(cfg.family);
  const int resolution = cfg.resolution > 0 ? cfg.resolution : info.hf_resolution;
  std::ostringstream name;
  name << family_name(cfg.family) << '_' << cfg.stream << "_n" << cfg.n << "_r" << resolution << "_s" << cfg.seed
       << ".jsonl";
  const auto path = *cache_dir / name.str();
  if (std::filesystem::exists(path)) {
    auto d = load_dataset(path);
    if (d.meta.family == cfg.family && d.meta.hf_resolution == resolution && d.meta.seed == cfg.seed &&
        d.meta.stream == cfg.stream && d.meta.solver_version == kSolverVersion &&
        d.samples.size() == static_cast<std::size_t>(cfg.n)) {
      return d;
    }
  }
  auto d = gen_data(cfg);
  save_dataset(path, d);
  return d;
}

// ---------------------------------------------------------------------------

FractionalError fractional_error(const std::vector<std::vector<double>>& preds,
                                 const std::vector<std::vector<double>>& targets) {
  if (preds.size() != targets.size()) throw ValidationError("fractional_error: length mismatch");
  if (preds.empty()) throw ValidationError("fractional_error: no samples");
  FractionalError fe;
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].size() != targets[i].size()) throw ValidationError("fractional_error: component mismatch");
    double num = 0.0;
    double den = 0.0;
    for (std::size_t c = 0; c < preds[i].size(); ++c) {
      const double d = preds[i][c] - targets[i][c];
      num += d * d;
      den += targets[i][c] * targets[i][c];
    }
    if (den == 0.0) {
      fe.per_sample.push_back(std::numeric_limits<double>::quiet_NaN());
      ++fe.excluded;
      continue;
    }
    const double e = std::sqrt(num) / std::sqrt(den);
    fe.per_sample.push_back(e);
    sum += e;
    ++used;
  }
  if (used == 0) throw ValidationError("fractional_error: every target has zero norm");
  fe.value = sum / static_cast<double>(used);
  return fe;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per_sample = nlohmann::json::array();
  for (double e : fe.per_sample) per_sample.push_back(finite_or_null(e));
  nlohmann::json ws = nlohmann::json::array();
  for (double v : w) ws.push_back(finite_or_null(v));
  return {{"format", "peds-eval-report"},
          {"version", 1},
          {"model", model},
          {"family", family_name(family)},
          {"fe_formula", kFeFormula},
          {"fractional_error", finite_or_null(fe.value)},
          {"per_sample_errors", per_sample},
          {"excluded", fe.excluded},
          {"train_size", train_size},
          {"test_size", test_size},
          {"ensemble_size", ensemble_size},
          {"predictions", predictions},
          {"w", ws},
          {"status", status}};
}

EvalReport evaluate(const std::string& name, const Ensemble& model, const Dataset& test, std::size_t train_size) {
  if (test.samples.empty()) throw ValidationError("test set is empty");
  EvalReport r;
  r.model = name;
  r.family = test.meta.family;
  r.train_size = train_size;
  r.test_size = test.samples.size();
  r.ensemble_size = static_cast<int>(model.size());
  r.predictions = parallel_map<std::vector<double>>(
      test.samples.size(), [&](std::size_t i) { return ensemble_predict(model, test.samples[i].params).mean; });
  std::vector<std::vector<double>> targets;
  for (const auto& s : test.samples) targets.push_back(s.target);
  r.fe = fractional_error(r.predictions, targets);
  for (std::size_t i = 0; i < model.size(); ++i) {
    const double w = model.member(i).mixing_weight();
    if (std::isfinite(w)) r.w.push_back(w);
  }
  return r;
}

double time_per_call(const std::function<void(std::size_t)>& fn, std::size_t samples, double min_seconds) {
  if (samples == 0) throw ValidationError("time_per_call needs at least one sample");
  std::size_t calls = 0;
  const auto t0 = Clock::now();
  double elapsed = 0.0;
  do {
    fn(calls % samples);
    ++calls;
    elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
  } while (calls < samples || elapsed < min_seconds);
  return elapsed / static_cast<double>(calls);
}

// ---------------------------------------------------------------------------

TrainConfig default_train_config(Family family) {
  TrainConfig cfg;
  cfg.epochs = 200;
  if (family_info(family).physics == Physics::Helmholtz) {
    cfg.loss = {LossConfig::Kind::GaussianNll, 1e-3};
  } else {
    cfg.loss = {LossConfig::Kind::Huber, 1e-3};
  }
  return cfg;
}

int default_retrain_epochs(Family) { return 10; }

AlConfig default_al_config(Family family) {
  AlConfig al;
  al.ensemble_size = kDefaultAlEnsembleSize;
  al.initial_training = default_train_config(family);
  al.retraining = al.initial_training;
  al.retraining.epochs = default_retrain_epochs(family);
  return al;
}

double ExperimentResult::improvement() const {
  if (!peds || peds->fe.value == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return low_fidelity.fe.value / peds->fe.value;
}

nlohmann::json ExperimentResult::summary() const {
  nlohmann::json j{{"family", family_name(config.family)},
                   {"n_train", config.n_train},
                   {"n_test", config.n_test},
                   {"seed", config.seed},
                   {"ensemble", config.ensemble},
                   {"loss", std::string(config.train.loss.name())},
                   {"fe_formula", kFeFormula},
                   {"low_fidelity_fe", finite_or_null(low_fidelity.fe.value)}};
  j["peds_fe"] = peds ? finite_or_null(peds->fe.value) : nlohmann::json(nullptr);
  j["nn_only_fe"] = nn_only ? finite_or_null(nn_only->fe.value) : nlohmann::json(nullptr);
  j["improvement"] = finite_or_null(improvement());
  if (peds && !peds->w.empty()) j["w_mean"] = mean(peds->w);
  return j;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.n_train < 1 || cfg.n_test < 1) throw ValidationError("n_train and n_test must be >= 1");
  if (cfg.ensemble < 1) throw ValidationError("ensemble size must be >= 1");
  ExperimentResult out;
  out.config = cfg;

  GenDataConfig train_cfg{cfg.family, cfg.n_train, cfg.resolution, cfg.seed, "train"};
  GenDataConfig test_cfg{cfg.family, cfg.n_test, cfg.resolution, cfg.seed, "test"};
  const auto train_data = cached_gen_data(train_cfg, cfg.data_dir);
  const auto test_data = cached_gen_data(test_cfg, cfg.data_dir);
  for (const auto& t : test_data.samples) {
    for (const auto& s : train_data.samples) {
      if (same_params(t.params, s.params)) throw ValidationError("train and test sets overlap");
    }
  }
  const auto train_size = train_data.samples.size();

  Ensemble lf;
  lf.add(std::make_unique<LowFidelityBaseline>(cfg.family));
  out.low_fidelity = evaluate("low_fidelity", lf, test_data, 0);

  auto run_stage = [&](const std::string& name, const ModelFactory& factory, std::uint64_t stream_seed,
                       std::vector<TrainResult>* results) -> std::pair<std::optional<EvalReport>, std::optional<Ensemble>> {
    TrainConfig tc = cfg.train;
    tc.seed = stream_seed;
    int member = -1;
    if (cfg.on_epoch) {
      tc.on_epoch = [&](const EpochRecord& r) {
        if (r.epoch == 0) ++member;
        cfg.on_epoch(name, member, r);
      };
    }
    try {
      auto ens = train_ensemble(factory, train_data.samples, tc, cfg.ensemble, results);
      auto report = evaluate(name, ens, test_data, train_size);
      if (results != nullptr) {
        for (const auto& r : *results) {
          if (r.aborted) report.status = "aborted: " + r.diagnostics;
        }
      }
      return {report, std::move(ens)};
    } catch (const std::exception& e) {
      EvalReport failed;
      failed.model = name;
      failed.family = cfg.family;
      failed.train_size = train_size;
      failed.test_size = test_data.samples.size();
      failed.fe.value = std::numeric_limits<double>::quiet_NaN();
      failed.status = std::string("failed: ") + e.what();
      return {failed, std::nullopt};
    }
  };

  if (cfg.run_peds) {
    auto [report, ens] = run_stage(
        "peds", [&](std::uint64_t s) { return std::make_unique<PedsModel>(cfg.family, cfg.network, s); },
        derive_seed(cfg.seed, "peds"), &out.peds_training);
    out.peds = std::move(report);
    out.peds_model = std::move(ens);
  }
  if (cfg.run_nn_only) {
    out.nn_only = run_stage(
        "nn_only", [&](std::uint64_t s) { return std::make_unique<MlpSurrogate>(cfg.family, cfg.network, s); },
        derive_seed(cfg.seed, "nn_only"), nullptr).first;
  }

  if (cfg.measure_speedup) {
    const auto& samples = test_data.samples;
    const double lf_seconds = time_per_call(
        [&](std::size_t i) { (void)low_fidelity_baseline(samples[i].params); }, std::min<std::size_t>(samples.size(), 50));
    out.timing = {{"hf_seconds_per_point", finite_or_null(mean(train_data.point_seconds))},
                  {"lf_seconds_per_point", lf_seconds}};
    if (out.peds_model) {
      const auto& m = out.peds_model->member(0);
      const double peds_seconds = time_per_call(
          [&](std::size_t i) { (void)m.predict(samples[i].params); }, std::min<std::size_t>(samples.size(), 50));
      out.timing["peds_seconds_per_point"] = peds_seconds;
    }
    if (!train_data.point_seconds.empty()) {
      out.timing["speedup_lf"] = mean(train_data.point_seconds) / lf_seconds;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> OracleCache::operator()(const GeometryParams& p) {
  const auto key = nlohmann::json(p).dump();
  {
    std::lock_guard lock(mutex_);
    if (auto it = entries_.find(key); it != entries_.end()) {
      ++hits_;
      return it->second.second;
    }
  }
  double seconds = 0.0;
  auto target = solve_target(p, resolution_, seconds);
  std::lock_guard lock(mutex_);
  entries_.emplace(key, std::make_pair(p, target));
  return target;
}

void OracleCache::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) return;
  std::string line;
  std::lock_guard lock(mutex_);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (j.at("resolution").get<int>() != resolution_ || j.at("solver_version").get<std::string>() != kSolverVersion) {
      continue;
    }
    auto p = j.at("params").get<GeometryParams>();
    entries_.emplace(nlohmann::json(p).dump(), std::make_pair(p, j.at("target").get<std::vector<double>>()));
  }
}

void OracleCache::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + path.string());
  std::lock_guard lock(mutex_);
  for (const auto& [key, entry] : entries_) {
    os << nlohmann::json{{"params", entry.first},
                         {"target", entry.second},
                         {"resolution", resolution_},
                         {"solver_version", kSolverVersion}}
              .dump()
       << '\n';
  }
}

std::size_t OracleCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::size_t OracleCache::hits() const {
  std::lock_guard lock(mutex_);
  return hits_;
}

int al_iterations_for_budget(const AlConfig& al, int budget) {
  if (budget < al.n_init) throw ValidationError("budget is smaller than n_init");
  if ((budget - al.n_init) % al.k != 0) throw ValidationError("budget - n_init must be a multiple of K");
  return (budget - al.n_init) / al.k;
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

nlohmann::json AlExperimentResult::summary() const {
  nlohmann::json runs_json = nlohmann::json::array();
  for (const auto& r : runs) {
    runs_json.push_back({{"seed", r.seed},
                         {"al_fe", finite_or_null(r.al.fe.value)},
                         {"random_fe", finite_or_null(r.random.fe.value)},
                         {"nn_only_fe", r.nn_only ? finite_or_null(r.nn_only->fe.value) : nlohmann::json(nullptr)},
                         {"al_train_size", r.al.train_size},
                         {"random_train_size", r.random.train_size}});
  }
  return {{"family", family_name(config.family)},
          {"budget", config.budget},
          {"al", config.al},
          {"n_test", config.n_test},
          {"fe_formula", kFeFormula},
          {"low_fidelity_fe", finite_or_null(low_fidelity.fe.value)},
          {"median_al_fe", finite_or_null(median_al_fe)},
          {"median_random_fe", finite_or_null(median_random_fe)},
          {"median_nn_only_fe", finite_or_null(median_nn_only_fe)},
          {"runs", runs_json}};
}

AlExperimentResult run_al_experiment(const AlExperimentConfig& cfg) {
  if (cfg.seeds.empty()) throw ValidationError("at least one seed is required");
  AlExperimentResult out;
  out.config = cfg;
  out.config.al.iterations = al_iterations_for_budget(cfg.al, cfg.budget);
  const auto& al = out.config.al;
  al.validate();
  auto progress = [&](const std::string& msg) {
    if (cfg.progress) cfg.progress(msg);
  };

  const auto test = cached_gen_data({cfg.family, cfg.n_test, 0, cfg.test_seed, "test"}, cfg.data_dir);
  Ensemble lf;
  lf.add(std::make_unique<LowFidelityBaseline>(cfg.family));
  out.low_fidelity = evaluate("low_fidelity", lf, test, 0);

  OracleCache oracle;
  std::optional<std::filesystem::path> oracle_path;
  if (cfg.data_dir) {
    oracle_path = *cfg.data_dir / (std::string(family_name(cfg.family)) + "_oracle.jsonl");
    oracle.load(*oracle_path);
  }
  const Oracle call_oracle = [&](const GeometryParams& p) { return oracle(p); };
  const ModelFactory factory = [&](std::uint64_t s) {
    return std::make_unique<PedsModel>(cfg.family, cfg.network, s);
  };

  std::vector<double> al_fe, random_fe, nn_fe;
  for (const auto seed : cfg.seeds) {
    AlSeedResult run;
    run.seed = seed;
    progress("seed " + std::to_string(seed) + ": uncertainty acquisition");
    auto guided = active_learn(al, cfg.family, factory, call_oracle, seed);
    run.al = evaluate("peds_al", guided.ensemble, test, guided.dataset.size());
    run.al_log = std::move(guided.log);
    run.al_sizes = std::move(guided.sizes);
    if (oracle_path) oracle.save(*oracle_path);

    progress("seed " + std::to_string(seed) + ": uniform acquisition");
    AlConfig uniform = al;
    uniform.m = 1;
    auto random = active_learn(uniform, cfg.family, factory, call_oracle, seed);
    run.random = evaluate("peds_random", random.ensemble, test, random.dataset.size());
    if (oracle_path) oracle.save(*oracle_path);

    if (cfg.run_nn_only) {
      progress("seed " + std::to_string(seed) + ": NN-only on the uniform points");
      TrainConfig tc = al.initial_training;
      tc.seed = derive_seed(seed, "nn_only");
      auto nn = train_nn_only_baseline(cfg.family, random.dataset, tc, al.ensemble_size, cfg.network);
      run.nn_only = evaluate("nn_only", nn, test, random.dataset.size());
      nn_fe.push_back(run.nn_only->fe.value);
    }
    al_fe.push_back(run.al.fe.value);
    random_fe.push_back(run.random.fe.value);
    out.runs.push_back(std::move(run));
  }
  out.median_al_fe = median(al_fe);
  out.median_random_fe = median(random_fe);
  out.median_nn_only_fe = median(nn_fe);
  return out;
}

}  // namespace peds
