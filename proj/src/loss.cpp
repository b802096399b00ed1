// SPDX-License-Identifier: Apache-2.0

#include "peds/loss.hpp"

#include <cmath>
#include <string>

#include "peds/error.hpp"

namespace peds {

LossConfig LossConfig::parse(std::string_view name) {
  if (name == "huber") return {Kind::Huber, 1e-3};
  if (name == "nll" || name == "gaussian_nll") return {Kind::GaussianNll, 1e-3};
  throw ValidationError("unknown loss '" + std::string(name) + "' (expected huber or nll)");
}

std::string_view LossConfig::name() const { return kind == Kind::Huber ? "huber" : "nll"; }

double huber(double a, double delta) {
  const double m = std::abs(a);
  return m <= delta ? 0.5 * a * a : delta * (m - 0.5 * delta);
}

double huber_derivative(double a, double delta) {
  if (std::abs(a) <= delta) return a;
  return a > 0.0 ? delta : -delta;
}

double gaussian_nll(std::span<const double> pred, double sigma, std::span<const double> target) {
  if (!(sigma > 0.0)) throw ValidationError("gaussian_nll: sigma must be > 0");
  if (pred.size() != target.size()) throw ValidationError("gaussian_nll: size mismatch");
  double sum = 0.0;
  for (std::size_t c = 0; c < pred.size(); ++c) {
    const double r = target[c] - pred[c];
    sum += std::log(sigma) + r * r / (2.0 * sigma * sigma);
  }
  return sum;
}

SampleLoss sample_loss(const LossConfig& cfg, std::span<const double> pred, double sigma,
                       std::span<const double> target) {
  if (pred.size() != target.size()) throw ValidationError("loss: prediction and target sizes differ");
  SampleLoss out;
  out.d_pred.resize(pred.size());
  if (cfg.kind == LossConfig::Kind::Huber) {
    if (!(cfg.delta > 0.0)) throw ValidationError("huber: delta must be > 0");
    for (std::size_t c = 0; c < pred.size(); ++c) {
      const double a = pred[c] - target[c];
      out.value += huber(a, cfg.delta);
      out.d_pred[c] = huber_derivative(a, cfg.delta);
    }
    return out;
  }
  out.value = gaussian_nll(pred, sigma, target);
  const double inv2 = 1.0 / (sigma * sigma);
  for (std::size_t c = 0; c < pred.size(); ++c) {
    const double r = pred[c] - target[c];
    out.d_pred[c] = r * inv2;
    out.d_sigma += 1.0 / sigma - r * r * inv2 / sigma;
  }
  return out;
}

}  // namespace peds
