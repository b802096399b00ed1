// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string_view>
#include <vector>

namespace peds {

struct LossConfig {
  enum class Kind { Huber, GaussianNll };
  Kind kind = Kind::Huber;
  double delta = 1e-3;  // Huber threshold

  static LossConfig parse(std::string_view name);
  std::string_view name() const;
};

// 0.5 a^2 for |a| <= delta, delta (|a| - delta / 2) otherwise.
double huber(double a, double delta);
double huber_derivative(double a, double delta);

// Sum over components of log(sigma) + (target - pred)^2 / (2 sigma^2).
double gaussian_nll(std::span<const double> pred, double sigma, std::span<const double> target);

struct SampleLoss {
  double value = 0.0;
  std::vector<double> d_pred;
  double d_sigma = 0.0;
};

// Per-sample loss and its partials with respect to the prediction and sigma.
SampleLoss sample_loss(const LossConfig& cfg, std::span<const double> pred, double sigma,
                       std::span<const double> target);

}  // namespace peds
