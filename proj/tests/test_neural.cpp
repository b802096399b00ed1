// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "peds/error.hpp"
#include "peds/loss.hpp"
#include "peds/neural.hpp"

using namespace peds;

namespace {

std::vector<double> random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = uniform(rng, -scale, scale);
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Gradient check of <cot, f(params)> on sampled parameters.
void check_param_gradient(const MlpLayout& layout, Rng& rng, int samples, double tol) {
  std::vector<double> params(layout.param_count());
  init_params(layout, params, rng);
  for (std::size_t l = 0; l < layout.layer_count(); ++l) {
    const auto b = layout.bias_offset(l);
    for (int j = 0; j < layout.sizes[l + 1]; ++j) params[b + j] = uniform(rng, -0.3, 0.3);
  }
  const auto x = random_vector(static_cast<std::size_t>(layout.input_size()), rng);
  const auto cot = random_vector(static_cast<std::size_t>(layout.output_size()), rng);
  MlpTape tape;
  forward(layout, params, x, tape);
  std::vector<double> grad(params.size(), 0.0);
  backward(layout, params, tape, cot, grad);
  for (int s = 0; s < samples; ++s) {
    const auto k = static_cast<std::size_t>(uniform_index(rng, params.size()));
    const double h = 1e-5;
    auto pp = params, pm = params;
    pp[k] += h;
    pm[k] -= h;
    const double fd = (dot(cot, forward(layout, pp, x)) - dot(cot, forward(layout, pm, x))) / (2 * h);
    CHECK(std::abs(grad[k] - fd) <= tol * std::max(std::abs(fd), 1e-6));
  }
}

}  // namespace

TEST_SUITE("neural") {
  TEST_CASE("layout bookkeeping") {
    const MlpLayout layout({3, 5, 2}, {});
    CHECK(layout.param_count() == 3 * 5 + 5 + 5 * 2 + 2);
    CHECK(layout.weight_offset(0) == 0);
    CHECK(layout.bias_offset(0) == 15);
    CHECK(layout.weight_offset(1) == 20);
    CHECK(layout.bias_offset(1) == 30);
    CHECK_THROWS_AS(MlpLayout({3}, {}), ValidationError);
  }

  TEST_CASE("zero network gives zero output") {
    const MlpLayout layout({4, 6, 3}, {});
    const std::vector<double> params(layout.param_count(), 0.0);
    for (double v : forward(layout, params, std::vector<double>{1, -2, 3, 0.5})) CHECK(v == 0.0);
  }

  TEST_CASE("identity layer adds the bias") {
    const MlpLayout layout({3, 3}, {});
    std::vector<double> params(layout.param_count(), 0.0);
    for (int i = 0; i < 3; ++i) params[static_cast<std::size_t>(i) * 3 + i] = 1.0;
    const std::vector<double> b{0.5, -1.0, 2.0};
    std::copy(b.begin(), b.end(), params.begin() + static_cast<std::ptrdiff_t>(layout.bias_offset(0)));
    const std::vector<double> x{1.0, 2.0, 3.0};
    const auto y = forward(layout, params, x);
    for (int i = 0; i < 3; ++i) CHECK(y[i] == x[i] + b[i]);
  }

  TEST_CASE("linear network: input gradient is W^T cot") {
    Rng rng(4);
    const MlpLayout layout({3, 2}, {});
    std::vector<double> params(layout.param_count());
    for (double& p : params) p = uniform(rng, -1.0, 1.0);
    const std::vector<double> x{0.2, -0.4, 0.9}, cot{1.5, -0.5};
    MlpTape tape;
    forward(layout, params, x, tape);
    std::vector<double> gp(params.size(), 0.0), gx(3, 0.0);
    backward(layout, params, tape, cot, gp, gx);
    for (int i = 0; i < 3; ++i) {
      const double expected = params[static_cast<std::size_t>(i)] * cot[0] + params[3 + static_cast<std::size_t>(i)] * cot[1];
      CHECK(gx[i] == doctest::Approx(expected).epsilon(1e-14));
    }
  }

  TEST_CASE("bounded output stays in range") {
    Rng rng(5);
    const MlpLayout layout({4, 8, 6}, {OutputKind::BoundedSigmoid, 0.1, 1.0, 0.0});
    Mlp net(layout, rng);
    for (double& p : net.params) p *= 50.0;
    for (int trial = 0; trial < 100; ++trial) {
      for (double v : net(random_vector(4, rng, 100.0))) {
        CHECK(v >= 0.1);
        CHECK(v <= 1.0);
      }
    }
  }

  TEST_CASE("softplus output is strictly positive") {
    Rng rng(6);
    const MlpLayout layout({2, 4, 1}, {OutputKind::Softplus, 0.0, 1.0, 1e-6});
    std::vector<double> params(layout.param_count(), 0.0);
    params[layout.bias_offset(1)] = -1e3;
    const auto y = forward(layout, params, std::vector<double>{0.0, 0.0});
    CHECK(y[0] >= 1e-6);
    CHECK(y[0] == doctest::Approx(1e-6));
  }

  TEST_CASE("backward: zero cotangent gives zero gradients") {
    Rng rng(7);
    const MlpLayout layout({3, 5, 5, 2}, {});
    Mlp net(layout, rng);
    MlpTape tape;
    const auto x = random_vector(3, rng);
    forward(layout, net.params, x, tape);
    std::vector<double> gp(net.params.size(), 0.0), gx(3, 0.0);
    backward(layout, net.params, tape, std::vector<double>{0.0, 0.0}, gp, gx);
    for (double g : gp) CHECK(g == 0.0);
    for (double g : gx) CHECK(g == 0.0);
  }

  TEST_CASE("backward matches finite differences") {
    Rng rng(8);
    check_param_gradient(MlpLayout({5, 12, 9, 3}, {}), rng, 50, 1e-5);
    check_param_gradient(MlpLayout({5, 12, 9, 16}, {OutputKind::BoundedSigmoid, 0.1, 1.0, 0.0}), rng, 50, 1e-5);
    check_param_gradient(MlpLayout({5, 8, 1}, {OutputKind::Softplus, 0.0, 1.0, 1e-6}), rng, 30, 1e-5);
  }

  TEST_CASE("backward: input gradient matches finite differences") {
    Rng rng(9);
    const MlpLayout layout({4, 10, 3}, {OutputKind::BoundedSigmoid, 0.1, 1.0, 0.0});
    Mlp net(layout, rng);
    const auto x = random_vector(4, rng);
    const auto cot = random_vector(3, rng);
    MlpTape tape;
    forward(layout, net.params, x, tape);
    std::vector<double> gp(net.params.size(), 0.0), gx(4, 0.0);
    backward(layout, net.params, tape, cot, gp, gx);
    for (std::size_t i = 0; i < 4; ++i) {
      auto xp = x, xm = x;
      xp[i] += 1e-6;
      xm[i] -= 1e-6;
      const double fd = (dot(cot, net(xp)) - dot(cot, net(xm))) / 2e-6;
      CHECK(gx[i] == doctest::Approx(fd).epsilon(1e-6));
    }
  }

  TEST_CASE("dimension mismatch is rejected") {
    Rng rng(10);
    const MlpLayout layout({3, 2}, {});
    Mlp net(layout, rng);
    CHECK_THROWS_AS(net(std::vector<double>{1.0, 2.0}), ValidationError);
  }

  TEST_CASE("json round trip") {
    Rng rng(11);
    Mlp net(MlpLayout({3, 4, 2}, {OutputKind::BoundedSigmoid, 0.1, 1.0, 0.0}), rng);
    const nlohmann::json j = net;
    const auto back = j.get<Mlp>();
    CHECK(back.params == net.params);
    CHECK(back.layout.sizes == net.layout.sizes);
    CHECK(back.layout.output.kind == OutputKind::BoundedSigmoid);
    const std::vector<double> x{0.1, 0.2, 0.3};
    CHECK(back(x) == net(x));
  }

  TEST_CASE("adam: first step by hand") {
    AdamState s(2, 0.01);
    std::vector<double> p{1.0, 1.0};
    const std::vector<double> g{0.5, -2.0};
    adam_step(s, p, g);
    // m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps).
    CHECK(p[0] == doctest::Approx(1.0 - 0.01 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(1.0 + 0.01 * 2.0 / (2.0 + 1e-8)).epsilon(1e-14));
    CHECK(s.step == 1);
    CHECK(s.m[0] == doctest::Approx(0.05));
    CHECK(s.v[1] == doctest::Approx(0.004));
  }

  TEST_CASE("adam: zero gradient leaves parameters and decays moments") {
    AdamState s(2, 0.01);
    std::vector<double> p{1.0, -1.0};
    adam_step(s, p, std::vector<double>{1.0, 1.0});
    const auto m = s.m, v = s.v;
    const auto before = p;
    AdamState z(2, 0.01);
    std::vector<double> q{3.0, 4.0};
    adam_step(z, q, std::vector<double>{0.0, 0.0});
    CHECK(q == std::vector<double>{3.0, 4.0});
    adam_step(s, p, std::vector<double>{0.0, 0.0});
    CHECK(s.m[0] == doctest::Approx(0.9 * m[0]));
    CHECK(s.v[0] == doctest::Approx(0.999 * v[0]));
    // The decayed first moment still moves the parameter.
    CHECK(p[0] != before[0]);
  }

  TEST_CASE("adam: constant gradient gives steps of size lr") {
    AdamState s(1, 0.003);
    std::vector<double> p{0.0};
    double last = 0.0;
    for (int i = 0; i < 2000; ++i) {
      const double before = p[0];
      adam_step(s, p, std::vector<double>{-7.0});
      last = p[0] - before;
    }
    CHECK(last == doctest::Approx(0.003).epsilon(1e-6));
  }

  TEST_CASE("adam: non-finite gradient and shape mismatch") {
    AdamState s(2, 0.01);
    std::vector<double> p{0.0, 0.0};
    CHECK_THROWS_AS(adam_step(s, p, std::vector<double>{NAN, 0.0}), SolverError);
    CHECK_THROWS_AS(adam_step(s, p, std::vector<double>{1.0}), ValidationError);
  }
}

TEST_SUITE("loss") {
  TEST_CASE("huber values") {
    const double d = 1e-3;
    CHECK(huber(0.0, d) == 0.0);
    CHECK(huber(d, d) == doctest::Approx(0.5 * d * d).epsilon(1e-14));
    CHECK(huber(2 * d, d) == doctest::Approx(1.5 * d * d).epsilon(1e-14));
    CHECK(huber(-2 * d, d) == huber(2 * d, d));
  }

  TEST_CASE("huber is C1 at the threshold") {
    for (double d : {1e-3, 0.5, 2.0}) {
      const double below = std::nextafter(d, 0.0), above = std::nextafter(d, 1e9);
      CHECK(std::abs(huber(below, d) - huber(above, d)) <= 1e-12);
      CHECK(std::abs(huber_derivative(below, d) - huber_derivative(above, d)) <= 1e-12);
      CHECK(std::abs(huber(-below, d) - huber(-above, d)) <= 1e-12);
      CHECK(std::abs(huber_derivative(-below, d) - huber_derivative(-above, d)) <= 1e-12);
    }
  }

  TEST_CASE("gaussian nll values") {
    const std::vector<double> one{1.0}, zero{0.0};
    CHECK(gaussian_nll(one, 1.0, one) == 0.0);
    CHECK(gaussian_nll(zero, 1.0, one) == doctest::Approx(0.5));
    CHECK_THROWS_AS(gaussian_nll(zero, 0.0, one), ValidationError);
    CHECK_THROWS_AS(gaussian_nll(zero, -1.0, one), ValidationError);
  }

  TEST_CASE("nll with unit sigma is half the squared error") {
    const std::vector<double> pred{0.3, -0.2}, target{1.0, 0.5};
    const auto l = sample_loss({LossConfig::Kind::GaussianNll, 1e-3}, pred, 1.0, target);
    CHECK(l.value == doctest::Approx(0.5 * (0.49 + 0.49)));
    CHECK(l.d_pred[0] == doctest::Approx(pred[0] - target[0]));
    CHECK(l.d_pred[1] == doctest::Approx(pred[1] - target[1]));
  }

  TEST_CASE("sample loss partials match finite differences") {
    Rng rng(12);
    for (auto kind : {LossConfig::Kind::Huber, LossConfig::Kind::GaussianNll}) {
      const LossConfig cfg{kind, 0.05};
      for (int trial = 0; trial < 20; ++trial) {
        const auto pred = random_vector(2, rng, 0.2), target = random_vector(2, rng, 0.2);
        const double sigma = uniform(rng, 0.05, 2.0);
        const auto l = sample_loss(cfg, pred, sigma, target);
        const double h = 1e-7;
        for (std::size_t c = 0; c < 2; ++c) {
          auto pp = pred, pm = pred;
          pp[c] += h;
          pm[c] -= h;
          const double fd = (sample_loss(cfg, pp, sigma, target).value - sample_loss(cfg, pm, sigma, target).value) / (2 * h);
          CHECK(std::abs(l.d_pred[c] - fd) <= 1e-6 * std::max(std::abs(fd), 1e-3));
        }
        if (kind == LossConfig::Kind::GaussianNll) {
          const double fd = (sample_loss(cfg, pred, sigma + h, target).value -
                             sample_loss(cfg, pred, sigma - h, target).value) / (2 * h);
          CHECK(std::abs(l.d_sigma - fd) <= 1e-6 * std::max(std::abs(fd), 1e-3));
        } else {
          CHECK(l.d_sigma == 0.0);
        }
      }
    }
  }

  TEST_CASE("loss names") {
    CHECK(LossConfig::parse("huber").kind == LossConfig::Kind::Huber);
    CHECK(LossConfig::parse("nll").kind == LossConfig::Kind::GaussianNll);
    CHECK(LossConfig::parse("nll").name() == "nll");
    CHECK_THROWS_AS(LossConfig::parse("mse"), ValidationError);
  }
}
