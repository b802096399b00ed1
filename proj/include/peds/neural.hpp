// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

#include "peds/random.hpp"

namespace peds {

enum class OutputKind {
  Identity,
  BoundedSigmoid,  // lo + (hi - lo) * sigmoid(z)
  Softplus,        // log(1 + e^z) + floor, strictly positive
};

struct OutputActivation {
  OutputKind kind = OutputKind::Identity;
  double lo = 0.0;
  double hi = 1.0;
  double floor = 1e-6;
};

// Fully connected network with ReLU hidden layers. Parameters live in a flat
// span owned by the caller: for each layer, the row-major (out x in) weight
// matrix followed by the bias.
struct MlpLayout {
  std::vector<int> sizes;  // input, hidden..., output
  OutputActivation output;

  MlpLayout() = default;
  MlpLayout(std::vector<int> sizes, OutputActivation output);

  int input_size() const { return sizes.front(); }
  int output_size() const { return sizes.back(); }
  std::size_t layer_count() const { return sizes.size() - 1; }
  std::size_t param_count() const;
  std::size_t weight_offset(std::size_t layer) const;
  std::size_t bias_offset(std::size_t layer) const;
};

void to_json(nlohmann::json& j, const MlpLayout& layout);
void from_json(const nlohmann::json& j, MlpLayout& layout);

// Per-layer pre-activations and activations recorded for backward().
struct MlpTape {
  std::vector<std::vector<double>> inputs;  // inputs[l] feeds layer l
  std::vector<double> output_pre;           // final pre-activation
  std::vector<double> output;
};

// Uniform He-style initialization, zero biases.
void init_params(const MlpLayout& layout, std::span<double> params, Rng& rng);

std::vector<double> forward(const MlpLayout& layout, std::span<const double> params, std::span<const double> x);
const std::vector<double>& forward(const MlpLayout& layout, std::span<const double> params,
                                   std::span<const double> x, MlpTape& tape);

// Reverse-mode pass. Accumulates into grad_params (same layout as params);
// writes d/dx into grad_x when it is non-empty.
void backward(const MlpLayout& layout, std::span<const double> params, const MlpTape& tape,
              std::span<const double> cotangent, std::span<double> grad_params, std::span<double> grad_x = {});

// Standalone network: layout plus owned parameters.
struct Mlp {
  MlpLayout layout;
  std::vector<double> params;

  Mlp() = default;
  Mlp(MlpLayout layout, Rng& rng);
  std::vector<double> operator()(std::span<const double> x) const { return forward(layout, params, x); }
};

void to_json(nlohmann::json& j, const Mlp& mlp);
void from_json(const nlohmann::json& j, Mlp& mlp);

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<double> m;
  std::vector<double> v;

  AdamState() = default;
  AdamState(std::size_t count, double learning_rate);
};

// One bias-corrected Adam update. Throws SolverError on non-finite gradients.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

void to_json(nlohmann::json& j, const AdamState& s);
void from_json(const nlohmann::json& j, AdamState& s);

}  // namespace peds
