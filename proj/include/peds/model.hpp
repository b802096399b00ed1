// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "peds/fidelity.hpp"
#include "peds/geometry.hpp"
#include "peds/loss.hpp"
#include "peds/neural.hpp"

namespace peds {

struct TrainingSample {
  GeometryParams params;
  std::vector<double> target;  // [kappa] or [Re t, Im t]
};

struct Prediction {
  std::vector<double> mean;
  double sigma = 1.0;
};

// Anything trainable by the minibatch loop: a flat parameter vector, a
// prediction, and a per-sample loss gradient.
class Surrogate {
 public:
  virtual ~Surrogate() = default;
  virtual std::unique_ptr<Surrogate> clone() const = 0;
  virtual std::string kind() const = 0;
  virtual Family family() const = 0;

  virtual std::span<double> parameters() = 0;
  virtual std::span<const double> parameters() const = 0;

  virtual Prediction predict(const GeometryParams& p) const = 0;
  // Adds d(loss)/d(parameters) into `grad`; returns the sample loss.
  virtual double accumulate_gradient(const TrainingSample& sample, const LossConfig& loss,
                                     std::span<double> grad) const = 0;

  // Mixing weight for PEDS models, NaN otherwise (logged during training).
  virtual double mixing_weight() const;
  virtual nlohmann::json to_json() const = 0;
};

std::unique_ptr<Surrogate> surrogate_from_json(const nlohmann::json& j);

// Network sizes. Defaults are the documented generator/sigma-net shapes.
struct NetworkOptions {
  std::vector<int> generator_hidden = {256, 256};
  std::vector<int> sigma_hidden = {64};
};

// Memoized rasterization at the low-fidelity resolution, keyed on the exact
// parameter bytes. Shared between clones; bounded in size.
class DownsampleCache {
 public:
  explicit DownsampleCache(std::size_t capacity = 50000) : capacity_(capacity) {}
  MaterialGrid get(const GeometryParams& p, int resolution);
  std::size_t size() const;

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, MaterialGrid> entries_;
};

// Everything one PEDS forward pass computes, kept for the reverse pass.
struct PedsTape {
  MlpTape generator;
  MlpTape sigma;
  MaterialGrid generated;
  MaterialGrid downsampled;
  MaterialGrid mixed;
  PropertyEvaluation property;
  Prediction prediction;
};

struct PedsGradients {
  std::vector<double> generator;
  std::vector<double> sigma_net;
  double w = 0.0;        // d/dw
  double w_logit = 0.0;  // d/d(logit w), what the optimizer sees
};

// f(p) = f_lf(P[w * generator(p) + (1 - w) * downsample(p)]).
class PedsModel final : public Surrogate {
 public:
  PedsModel(Family family, const NetworkOptions& options, std::uint64_t seed, double initial_w = 0.05);

  std::unique_ptr<Surrogate> clone() const override;
  std::string kind() const override { return "peds"; }
  Family family() const override { return family_; }
  std::span<double> parameters() override { return params_; }
  std::span<const double> parameters() const override { return params_; }

  Prediction predict(const GeometryParams& p) const override;
  double accumulate_gradient(const TrainingSample& sample, const LossConfig& loss,
                             std::span<double> grad) const override;
  double mixing_weight() const override { return w(); }
  nlohmann::json to_json() const override;
  static std::unique_ptr<PedsModel> from_json(const nlohmann::json& j);

  Prediction forward(const GeometryParams& p, PedsTape& tape) const;
  // Reverse pass for cotangents on the prediction vector and on sigma.
  void backward(const PedsTape& tape, std::span<const double> cot_pred, double cot_sigma,
                std::span<double> grad) const;
  PedsGradients gradients(const GeometryParams& p, std::span<const double> cot_pred, double cot_sigma) const;

  double w() const;
  // Sets w in [0, 1]; w = 0 and w = 1 are exact (infinite logit).
  void set_w(double w);
  const MlpLayout& generator_layout() const { return generator_; }
  const MlpLayout& sigma_layout() const { return sigma_; }
  std::span<const double> generator_params() const;
  std::span<const double> sigma_params() const;
  const ProjectionConfig& projection() const { return projection_; }
  void set_projection(const ProjectionConfig& cfg) { projection_ = cfg; }
  int lf_resolution() const { return lf_resolution_; }
  std::size_t w_index() const { return params_.size() - 1; }
  MaterialGrid downsample(const GeometryParams& p) const;

 private:
  PedsModel() = default;
  void check_family(const GeometryParams& p) const;

  Family family_ = Family::Fourier16;
  int lf_resolution_ = 4;
  MlpLayout generator_;
  MlpLayout sigma_;
  ProjectionConfig projection_;
  std::vector<double> params_;  // generator | sigma-net | logit(w)
  std::shared_ptr<DownsampleCache> cache_;
};

// NN-only baseline: the generator trunk plus a fully connected layer from
// the grid-sized hidden vector to the target.
class MlpSurrogate final : public Surrogate {
 public:
  MlpSurrogate(Family family, const NetworkOptions& options, std::uint64_t seed);

  std::unique_ptr<Surrogate> clone() const override;
  std::string kind() const override { return "nn_only"; }
  Family family() const override { return family_; }
  std::span<double> parameters() override { return params_; }
  std::span<const double> parameters() const override { return params_; }

  Prediction predict(const GeometryParams& p) const override;
  double accumulate_gradient(const TrainingSample& sample, const LossConfig& loss,
                             std::span<double> grad) const override;
  nlohmann::json to_json() const override;
  static std::unique_ptr<MlpSurrogate> from_json(const nlohmann::json& j);

  const MlpLayout& net_layout() const { return net_; }

 private:
  MlpSurrogate() = default;

  Family family_ = Family::Fourier16;
  MlpLayout net_;
  MlpLayout sigma_;
  std::vector<double> params_;  // net | sigma-net
};

// Low-fidelity solver on downsample(p); no trainable parameters.
class LowFidelityBaseline final : public Surrogate {
 public:
  explicit LowFidelityBaseline(Family family) : family_(family) {}
  std::unique_ptr<Surrogate> clone() const override { return std::make_unique<LowFidelityBaseline>(family_); }
  std::string kind() const override { return "low_fidelity"; }
  Family family() const override { return family_; }
  std::span<double> parameters() override { return {}; }
  std::span<const double> parameters() const override { return {}; }
  Prediction predict(const GeometryParams& p) const override;
  double accumulate_gradient(const TrainingSample& sample, const LossConfig& loss,
                             std::span<double> grad) const override;
  nlohmann::json to_json() const override;

 private:
  Family family_;
};

struct EnsemblePrediction {
  std::vector<double> mean;
  std::vector<double> variance;  // per component: mean(sigma_i^2 + mu_i^2) - mean(mu_i)^2
  double total_variance() const;
};

class Ensemble {
 public:
  Ensemble() = default;
  explicit Ensemble(std::vector<std::unique_ptr<Surrogate>> members);
  Ensemble(const Ensemble& other);
  Ensemble& operator=(const Ensemble& other);
  Ensemble(Ensemble&&) noexcept = default;
  Ensemble& operator=(Ensemble&&) noexcept = default;

  std::size_t size() const { return members_.size(); }
  bool empty() const { return members_.empty(); }
  Surrogate& member(std::size_t i) { return *members_[i]; }
  const Surrogate& member(std::size_t i) const { return *members_[i]; }
  void add(std::unique_ptr<Surrogate> member) { members_.push_back(std::move(member)); }

  nlohmann::json to_json() const;
  static Ensemble from_json(const nlohmann::json& j);

 private:
  std::vector<std::unique_ptr<Surrogate>> members_;
};

inline constexpr int kDefaultEnsembleSize = 5;

// Aggregates member predictions; throws ValidationError for an empty ensemble.
EnsemblePrediction aggregate_predictions(std::span<const Prediction> members);
EnsemblePrediction ensemble_predict(const Ensemble& e, const GeometryParams& p);

struct InclusionReport {
  std::vector<double> lf_min;  // per target component
  std::vector<double> lf_max;
  std::size_t probes = 0;
  std::size_t inside = 0;
  std::size_t total = 0;
  double fraction() const { return total == 0 ? 1.0 : static_cast<double>(inside) / static_cast<double>(total); }
};

// Fraction of targets inside the per-component range of the low-fidelity
// property over sampled coarse grids (uniform, extreme and random).
InclusionReport check_inclusion(Family family, std::span<const TrainingSample> samples, int random_probes,
                                std::uint64_t seed);

// Same counting against a precomputed range.
InclusionReport count_inclusion(std::span<const TrainingSample> samples, std::vector<double> lo,
                                std::vector<double> hi);

}  // namespace peds
