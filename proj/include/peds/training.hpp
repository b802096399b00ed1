// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "peds/loss.hpp"
#include "peds/model.hpp"

namespace peds {

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean minibatch loss over the epoch
  double val_loss = 0.0;
  double w = 0.0;           // NaN for models without a mixing weight
  double wallclock = 0.0;   // seconds since training started
};

void to_json(nlohmann::json& j, const EpochRecord& r);

struct TrainConfig {
  LossConfig loss;
  int epochs = 500;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double validation_fraction = 0.1;
  int patience = 50;
  std::uint64_t seed = 0;
  double wallclock_limit = 0.0;  // seconds; 0 disables the cap
  bool parallel = true;
  // PEDS only: fall back to w = 0 when that has lower training loss.
  bool non_degradation = true;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  double train_loss = 0.0;      // full training-split loss of the returned model
  double lf_train_loss = 0.0;   // same at w = 0 (PEDS only, else NaN)
  bool reverted_to_lf = false;
  bool aborted = false;         // non-finite loss; the model holds the last good checkpoint
  std::string diagnostics;
  std::size_t train_size = 0;
  std::size_t val_size = 0;
};

// Deterministic train/validation split of n samples: validation gets
// round(fraction * n) indices (none when that is 0 or n < 2).
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};
Split split_indices(std::size_t n, double fraction, std::uint64_t seed);

// Minibatch Adam with early stopping on validation loss. On return the model
// holds the best-on-validation parameters.
TrainResult train(Surrogate& model, std::span<const TrainingSample> data, const TrainConfig& cfg);

using ModelFactory = std::function<std::unique_ptr<Surrogate>(std::uint64_t seed)>;

// Trains `members` models from factory(derive_seed(seed, "member", i)).
Ensemble train_ensemble(const ModelFactory& factory, std::span<const TrainingSample> data, const TrainConfig& cfg,
                        int members, std::vector<TrainResult>* results = nullptr);

// Continues training every member of an existing ensemble.
void retrain_ensemble(Ensemble& ensemble, std::span<const TrainingSample> data, const TrainConfig& cfg,
                      std::vector<TrainResult>* results = nullptr);

Ensemble train_nn_only_baseline(Family family, std::span<const TrainingSample> data, const TrainConfig& cfg,
                                int members = kDefaultEnsembleSize, const NetworkOptions& options = {});

// ---------------------------------------------------------------------------
// Active learning

struct AlConfig {
  int n_init = 64;
  int iterations = 10;  // T
  int m = 4;            // M: M * K candidates per iteration
  int k = 32;           // K: candidates acquired per iteration
  int ensemble_size = kDefaultEnsembleSize;
  bool warm_start = true;
  TrainConfig initial_training;  // used on the n_init points (and for cold restarts)
  TrainConfig retraining;        // used after each acquisition when warm-starting
  void validate() const;
};

void to_json(nlohmann::json& j, const AlConfig& c);

using Oracle = std::function<std::vector<double>(const GeometryParams&)>;
// Uncertainty score per candidate; larger is acquired first.
using AcquisitionScorer = std::function<std::vector<double>(
    const Ensemble&, std::span<const GeometryParams> candidates, std::span<const TrainingSample> train)>;

// Total predictive variance of the ensemble.
AcquisitionScorer ensemble_variance_scorer();

// Indices of the k largest scores, largest first; ties keep the lower index.
std::vector<std::size_t> select_top_k(std::span<const double> scores, std::size_t k);

struct Acquisition {
  int iteration = 0;
  GeometryParams params;
  double score = 0.0;
  int rank = 0;            // 0 = highest score in the candidate pool
  bool acquired = false;   // false when the oracle failed
  std::string error;
};

void to_json(nlohmann::json& j, const Acquisition& a);

struct AlResult {
  Ensemble ensemble;
  std::vector<TrainingSample> dataset;
  std::vector<Acquisition> log;
  std::vector<std::size_t> sizes;  // training-set size after init and after each iteration
  std::size_t skipped = 0;
};

// Trains on n_init random points, then for T iterations draws M*K uniform
// candidates, scores them, sends the top K to the oracle, and retrains.
AlResult active_learn(const AlConfig& cfg, Family family, const ModelFactory& factory, const Oracle& oracle,
                      std::uint64_t seed, const AcquisitionScorer& scorer = {});

}  // namespace peds
