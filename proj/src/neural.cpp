// SPDX-License-Identifier: Apache-2.0

#include "peds/neural.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "peds/error.hpp"

namespace peds {
namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }

double apply_output(const OutputActivation& a, double z) {
  switch (a.kind) {
    case OutputKind::BoundedSigmoid:
      return a.lo + (a.hi - a.lo) * sigmoid(z);
    case OutputKind::Softplus:
      return softplus(z) + a.floor;
    case OutputKind::Identity:
      break;
  }
  return z;
}

double output_derivative(const OutputActivation& a, double z) {
  switch (a.kind) {
    case OutputKind::BoundedSigmoid: {
      const double s = sigmoid(z);
      return (a.hi - a.lo) * s * (1.0 - s);
    }
    case OutputKind::Softplus:
      return sigmoid(z);
    case OutputKind::Identity:
      break;
  }
  return 1.0;
}

const char* kind_name(OutputKind k) {
  switch (k) {
    case OutputKind::BoundedSigmoid:
      return "bounded_sigmoid";
    case OutputKind::Softplus:
      return "softplus";
    case OutputKind::Identity:
      break;
  }
  return "identity";
}

OutputKind parse_kind(const std::string& s) {
  if (s == "identity") return OutputKind::Identity;
  if (s == "bounded_sigmoid") return OutputKind::BoundedSigmoid;
  if (s == "softplus") return OutputKind::Softplus;
  throw ValidationError("unknown output activation '" + s + "'");
}

// y = W x + b for a row-major (out x in) W.
void affine(std::span<const double> w, std::span<const double> b, std::span<const double> x, std::span<double> y) {
  const std::size_t in = x.size();
  for (std::size_t o = 0; o < y.size(); ++o) {
    const double* row = w.data() + o * in;
    double acc = b[o];
    for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

void check_params(const MlpLayout& layout, std::span<const double> params) {
  if (params.size() != layout.param_count()) {
    throw ValidationError("parameter span has " + std::to_string(params.size()) + " entries, layout needs " +
                          std::to_string(layout.param_count()));
  }
}

}  // namespace

MlpLayout::MlpLayout(std::vector<int> sizes_, OutputActivation output_) : sizes(std::move(sizes_)), output(output_) {
  if (sizes.size() < 2) throw ValidationError("MLP needs at least an input and an output layer");
  for (int s : sizes) {
    if (s < 1) throw ValidationError("MLP layer sizes must be positive");
  }
  if (output.kind == OutputKind::BoundedSigmoid && !(output.lo < output.hi)) {
    throw ValidationError("bounded output needs lo < hi");
  }
}

std::size_t MlpLayout::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += static_cast<std::size_t>(sizes[l + 1]) * (sizes[l] + 1);
  return n;
}

std::size_t MlpLayout::weight_offset(std::size_t layer) const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < layer; ++l) n += static_cast<std::size_t>(sizes[l + 1]) * (sizes[l] + 1);
  return n;
}

std::size_t MlpLayout::bias_offset(std::size_t layer) const {
  return weight_offset(layer) + static_cast<std::size_t>(sizes[layer + 1]) * sizes[layer];
}

void to_json(nlohmann::json& j, const MlpLayout& layout) {
  j = nlohmann::json{{"sizes", layout.sizes},
                     {"output",
                      {{"kind", kind_name(layout.output.kind)},
                       {"lo", layout.output.lo},
                       {"hi", layout.output.hi},
                       {"floor", layout.output.floor}}}};
}

void from_json(const nlohmann::json& j, MlpLayout& layout) {
  OutputActivation out;
  const auto& o = j.at("output");
  out.kind = parse_kind(o.at("kind").get<std::string>());
  out.lo = o.value("lo", 0.0);
  out.hi = o.value("hi", 1.0);
  out.floor = o.value("floor", 1e-6);
  layout = MlpLayout(j.at("sizes").get<std::vector<int>>(), out);
}

void init_params(const MlpLayout& layout, std::span<double> params, Rng& rng) {
  check_params(layout, params);
  for (std::size_t l = 0; l < layout.layer_count(); ++l) {
    const int in = layout.sizes[l];
    const int out = layout.sizes[l + 1];
    const double limit = std::sqrt(6.0 / in);
    auto w = params.subspan(layout.weight_offset(l), static_cast<std::size_t>(in) * out);
    for (double& v : w) v = uniform(rng, -limit, limit);
    auto b = params.subspan(layout.bias_offset(l), static_cast<std::size_t>(out));
    std::fill(b.begin(), b.end(), 0.0);
  }
}

const std::vector<double>& forward(const MlpLayout& layout, std::span<const double> params,
                                   std::span<const double> x, MlpTape& tape) {
  check_params(layout, params);
  if (static_cast<int>(x.size()) != layout.input_size()) {
    throw ValidationError("MLP input has " + std::to_string(x.size()) + " entries, expected " +
                          std::to_string(layout.input_size()));
  }
  const std::size_t layers = layout.layer_count();
  tape.inputs.resize(layers);
  tape.inputs[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = static_cast<std::size_t>(layout.sizes[l]);
    const std::size_t out = static_cast<std::size_t>(layout.sizes[l + 1]);
    auto w = params.subspan(layout.weight_offset(l), in * out);
    auto b = params.subspan(layout.bias_offset(l), out);
    std::vector<double>& z = (l + 1 < layers) ? tape.inputs[l + 1] : tape.output_pre;
    z.resize(out);
    affine(w, b, tape.inputs[l], z);
    if (l + 1 < layers) {
      for (double& v : z) v = std::max(v, 0.0);
    }
  }
  tape.output.resize(tape.output_pre.size());
  for (std::size_t o = 0; o < tape.output.size(); ++o) tape.output[o] = apply_output(layout.output, tape.output_pre[o]);
  return tape.output;
}

std::vector<double> forward(const MlpLayout& layout, std::span<const double> params, std::span<const double> x) {
  MlpTape tape;
  return forward(layout, params, x, tape);
}

void backward(const MlpLayout& layout, std::span<const double> params, const MlpTape& tape,
              std::span<const double> cotangent, std::span<double> grad_params, std::span<double> grad_x) {
  check_params(layout, params);
  if (grad_params.size() != params.size()) throw ValidationError("gradient span does not match parameters");
  if (static_cast<int>(cotangent.size()) != layout.output_size()) throw ValidationError("cotangent has wrong size");
  if (!grad_x.empty() && static_cast<int>(grad_x.size()) != layout.input_size()) {
    throw ValidationError("input-gradient span has wrong size");
  }
  std::vector<double> delta(cotangent.size());
  for (std::size_t o = 0; o < delta.size(); ++o) {
    delta[o] = cotangent[o] * output_derivative(layout.output, tape.output_pre[o]);
  }
  for (std::size_t l = layout.layer_count(); l-- > 0;) {
    const std::size_t in = static_cast<std::size_t>(layout.sizes[l]);
    const std::size_t out = static_cast<std::size_t>(layout.sizes[l + 1]);
    const auto& x = tape.inputs[l];
    double* gw = grad_params.data() + layout.weight_offset(l);
    double* gb = grad_params.data() + layout.bias_offset(l);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      gb[o] += d;
      if (d == 0.0) continue;
      double* row = gw + o * in;
      for (std::size_t i = 0; i < in; ++i) row[i] += d * x[i];
    }
    if (l == 0 && grad_x.empty()) break;
    const double* w = params.data() + layout.weight_offset(l);
    std::vector<double> prev(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) prev[i] += row[i] * d;
    }
    if (l == 0) {
      std::copy(prev.begin(), prev.end(), grad_x.begin());
      break;
    }
    // inputs[l] is a ReLU output, so its derivative is (inputs[l] > 0).
    for (std::size_t i = 0; i < in; ++i) {
      if (!(x[i] > 0.0)) prev[i] = 0.0;
    }
    delta = std::move(prev);
  }
}

Mlp::Mlp(MlpLayout layout_, Rng& rng) : layout(std::move(layout_)), params(layout.param_count()) {
  init_params(layout, params, rng);
}

void to_json(nlohmann::json& j, const Mlp& mlp) {
  j = nlohmann::json{{"layout", mlp.layout}, {"params", mlp.params}};
}

void from_json(const nlohmann::json& j, Mlp& mlp) {
  mlp.layout = j.at("layout").get<MlpLayout>();
  mlp.params = j.at("params").get<std::vector<double>>();
  check_params(mlp.layout, mlp.params);
}

AdamState::AdamState(std::size_t count, double lr) : learning_rate(lr), m(count, 0.0), v(count, 0.0) {}

void adam_step(AdamState& s, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || s.m.size() != params.size() || s.v.size() != params.size()) {
    throw ValidationError("adam_step: parameter, gradient and moment sizes differ");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw SolverError("adam_step: non-finite gradient at index " + std::to_string(i) + " (step " +
                        std::to_string(s.step) + ")");
    }
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g;
    const double m_hat = s.m[i] / c1;
    const double v_hat = s.v[i] / c2;
    params[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
  }
}

void to_json(nlohmann::json& j, const AdamState& s) {
  j = nlohmann::json{{"learning_rate", s.learning_rate},
                     {"beta1", s.beta1},
                     {"beta2", s.beta2},
                     {"epsilon", s.epsilon},
                     {"step", s.step},
                     {"m", s.m},
                     {"v", s.v}};
}

void from_json(const nlohmann::json& j, AdamState& s) {
  s.learning_rate = j.at("learning_rate").get<double>();
  s.beta1 = j.at("beta1").get<double>();
  s.beta2 = j.at("beta2").get<double>();
  s.epsilon = j.at("epsilon").get<double>();
  s.step = j.at("step").get<long>();
  s.m = j.at("m").get<std::vector<double>>();
  s.v = j.at("v").get<std::vector<double>>();
  if (s.m.size() != s.v.size()) throw ValidationError("Adam moment sizes differ");
}

}  // namespace peds
