// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "peds/model.hpp"
#include "peds/training.hpp"

namespace peds {

inline constexpr const char* kSolverVersion = "peds-solvers-1";
inline constexpr int kDefaultTestSize = 200;

// ---------------------------------------------------------------------------
// Datasets

struct DatasetMeta {
  Family family = Family::Fourier16;
  int hf_resolution = 0;
  std::uint64_t seed = 0;
  std::string stream = "train";
  std::string solver_version = kSolverVersion;
  std::size_t resampled = 0;  // solver failures replaced by fresh draws
};

struct Dataset {
  DatasetMeta meta;
  std::vector<TrainingSample> samples;
  // Per-point solve time in seconds. Kept out of the JSONL file so that
  // datasets are bitwise reproducible; written to a sidecar instead.
  std::vector<double> point_seconds;

  // Same family and target size everywhere; no duplicate parameter vectors.
  void validate() const;
};

// JSON lines: a header object, then {params, target_re, target_im?, meta}.
void write_dataset(std::ostream& os, const Dataset& d);
Dataset read_dataset(std::istream& is);
void save_dataset(const std::filesystem::path& path, const Dataset& d);  // also writes <path>.timing.json
Dataset load_dataset(const std::filesystem::path& path);

struct GenDataConfig {
  Family family = Family::Fourier16;
  int n = 1;
  int resolution = 0;  // 0: the family's hf resolution
  std::uint64_t seed = 0;
  std::string stream = "train";
  bool parallel = true;
  int max_attempts = 10;  // per point, before a SolverError is raised
};

// Point i is drawn from its own derived stream, so the result does not depend
// on scheduling. Failed solves are redrawn from the same stream.
Dataset gen_data(const GenDataConfig& cfg);

// Same, but with fixed parameters (no sampling).
Dataset gen_data_for(Family family, const std::vector<GeometryParams>& params, int resolution, std::uint64_t seed,
                     bool parallel = true);

// gen_data through a directory cache keyed on the full configuration.
Dataset cached_gen_data(const GenDataConfig& cfg, const std::optional<std::filesystem::path>& cache_dir);

// ---------------------------------------------------------------------------
// Metrics and reports

inline constexpr const char* kFeFormula =
    "mean over samples of ||pred - target||_2 / ||target||_2; zero-norm targets excluded";

struct FractionalError {
  double value = 0.0;
  std::vector<double> per_sample;  // NaN for excluded samples
  std::size_t excluded = 0;
};

FractionalError fractional_error(const std::vector<std::vector<double>>& preds,
                                 const std::vector<std::vector<double>>& targets);

struct EvalReport {
  std::string model;  // peds | nn_only | low_fidelity
  Family family = Family::Fourier16;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  int ensemble_size = 0;
  FractionalError fe;
  std::vector<std::vector<double>> predictions;
  std::vector<double> w;  // learned mixing weights (PEDS members)
  std::string status = "ok";

  nlohmann::json to_json() const;
};

EvalReport evaluate(const std::string& name, const Ensemble& model, const Dataset& test, std::size_t train_size);

// Mean seconds per call of `fn` over `samples` (at least `min_seconds` of work).
double time_per_call(const std::function<void(std::size_t)>& fn, std::size_t samples, double min_seconds = 0.2);

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentConfig {
  Family family = Family::Fourier16;
  int n_train = 1000;
  int n_test = kDefaultTestSize;
  std::uint64_t seed = 0;
  int resolution = 0;
  int ensemble = kDefaultEnsembleSize;
  TrainConfig train;
  NetworkOptions network;
  bool run_peds = true;
  bool run_nn_only = true;
  bool measure_speedup = true;
  std::optional<std::filesystem::path> data_dir;
  std::function<void(const std::string& model, int member, const EpochRecord&)> on_epoch;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::optional<EvalReport> peds;
  std::optional<EvalReport> nn_only;
  EvalReport low_fidelity;
  std::optional<Ensemble> peds_model;
  std::vector<TrainResult> peds_training;
  nlohmann::json timing;  // wall-clock measurements, kept apart from the reports

  double improvement() const;  // low-fidelity FE / PEDS FE
  nlohmann::json summary() const;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Default training settings per family (loss, epochs, learning rate).
TrainConfig default_train_config(Family family);

// Epochs per warm-start retraining inside active learning.
int default_retrain_epochs(Family family);

inline constexpr int kDefaultAlBudget = 1024;
inline constexpr int kDefaultAlEnsembleSize = 3;

// n_init, M, K, ensemble size and training settings used by the comparison.
AlConfig default_al_config(Family family);

// ---------------------------------------------------------------------------
// Active-learning comparison

// Memoized high-fidelity oracle, optionally persisted as JSON lines.
class OracleCache {
 public:
  explicit OracleCache(int resolution = 0) : resolution_(resolution) {}
  std::vector<double> operator()(const GeometryParams& p);
  void load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  std::size_t size() const;
  std::size_t hits() const;

 private:
  int resolution_;
  mutable std::mutex mutex_;
  std::map<std::string, std::pair<GeometryParams, std::vector<double>>> entries_;
  std::size_t hits_ = 0;
};

struct AlExperimentConfig {
  Family family = Family::Maxwell10;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  int budget = kDefaultAlBudget;  // n_init + T * K; sets T
  AlConfig al = default_al_config(Family::Maxwell10);
  int n_test = kDefaultTestSize;
  std::uint64_t test_seed = 0;
  NetworkOptions network;
  bool run_nn_only = true;
  std::optional<std::filesystem::path> data_dir;  // test set and oracle cache
  std::function<void(const std::string&)> progress;
};

struct AlSeedResult {
  std::uint64_t seed = 0;
  EvalReport al;
  EvalReport random;
  std::optional<EvalReport> nn_only;
  std::vector<Acquisition> al_log;
  std::vector<std::size_t> al_sizes;
};

struct AlExperimentResult {
  AlExperimentConfig config;
  std::vector<AlSeedResult> runs;
  EvalReport low_fidelity;
  double median_al_fe = 0.0;
  double median_random_fe = 0.0;
  double median_nn_only_fe = 0.0;
  nlohmann::json summary() const;
};

// Iteration count that reaches `budget` points from n_init in steps of K.
int al_iterations_for_budget(const AlConfig& al, int budget);

// PEDS with uncertainty-driven acquisition against PEDS with uniform
// acquisition (M = 1) and an NN-only ensemble on the uniform points.
AlExperimentResult run_al_experiment(const AlExperimentConfig& cfg);

}  // namespace peds
