// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "peds/error.hpp"
#include "peds/geometry.hpp"

using namespace peds;

namespace {

GeometryParams zeros(Family f) {
  GeometryParams p;
  p.family = f;
  p.widths.assign(static_cast<std::size_t>(family_info(f).hole_count), 0.0);
  if (family_info(f).frequency_count > 0) p.freq_index = 0;
  return p;
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("family table") {
    CHECK(family_info(Family::Fourier16).hole_count == 16);
    CHECK(family_info(Family::Fisher25).hole_count == 25);
    CHECK(family_info(Family::Maxwell10).hole_count == 10);
    CHECK(family_info(Family::Maxwell10).target_dim == 2);
    CHECK(parse_family("Fourier(16)") == Family::Fourier16);
    CHECK(parse_family("maxwell10") == Family::Maxwell10);
    CHECK_THROWS_AS(parse_family("poisson3"), ValidationError);
    for (auto f : all_families()) CHECK(parse_family(family_name(f)) == f);
  }

  TEST_CASE("parameter validation") {
    auto p = zeros(Family::Fourier16);
    CHECK_NOTHROW(p.validate());
    p.widths.pop_back();
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = zeros(Family::Fourier16);
    p.widths[3] = 1.2;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = zeros(Family::Fourier16);
    p.freq_index = 1;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    auto m = zeros(Family::Maxwell10);
    m.freq_index.reset();
    CHECK_THROWS_AS(m.validate(), ValidationError);
    m.freq_index = 3;
    CHECK_THROWS_AS(m.validate(), ValidationError);
    m.freq_index = 2;
    CHECK(m.wavelength() == doctest::Approx(0.8));
    const auto x = m.features();
    REQUIRE(x.size() == 13);
    CHECK(x[10] == 0.0);
    CHECK(x[11] == 0.0);
    CHECK(x[12] == 1.0);
  }

  TEST_CASE("json round trip") {
    auto p = zeros(Family::Maxwell10);
    p.widths[4] = 0.3;
    p.freq_index = 1;
    const nlohmann::json j = p;
    const auto q = j.get<GeometryParams>();
    CHECK(q.family == p.family);
    CHECK(q.widths == p.widths);
    CHECK(q.freq_index == p.freq_index);
  }

  TEST_CASE("rasterize: no holes is pure medium") {
    const auto g = rasterize(zeros(Family::Fourier16), 4);
    CHECK(g.nx == 4);
    CHECK(g.ny == 4);
    for (double v : g.values) CHECK(v == 1.0);
    const auto m = rasterize(zeros(Family::Maxwell10), 10);
    CHECK(m.nx == 10);
    CHECK(m.ny == 110);
    for (double v : m.values) CHECK(v == 2.1);
  }

  TEST_CASE("rasterize: hole covering one coarse pixel") {
    auto p = zeros(Family::Fourier16);
    p.widths[5] = 1.0;  // lattice position (1, 1)
    const auto g = rasterize(p, 4);
    for (int iy = 0; iy < 4; ++iy) {
      for (int ix = 0; ix < 4; ++ix) {
        CHECK(g.at(ix, iy) == doctest::Approx((ix == 1 && iy == 1) ? 0.1 : 1.0).epsilon(1e-14));
      }
    }
  }

  TEST_CASE("rasterize: half-covered pixel is 0.55") {
    // Side sqrt(1/2) of the pitch, centred in its pixel: half the area.
    auto p = zeros(Family::Fourier16);
    p.widths[0] = std::sqrt(0.5);
    const auto g = rasterize(p, 4);
    CHECK(g.at(0, 0) == doctest::Approx(0.55).epsilon(1e-12));
    CHECK(g.at(1, 0) == 1.0);
  }

  TEST_CASE("rasterize: values stay within the material interval") {
    Rng rng(11);
    for (auto f : all_families()) {
      const auto& info = family_info(f);
      const double lo = std::min(info.hole_value, info.medium_value);
      const double hi = std::max(info.hole_value, info.medium_value);
      for (int trial = 0; trial < 5; ++trial) {
        auto p = sample_params(f, rng);
        for (double& w : p.widths) w = uniform01(rng);
        for (int res : {info.lf_resolution, 7, 13}) {
          const auto g = rasterize(p, res);
          for (double v : g.values) {
            CHECK(v >= lo);
            CHECK(v <= hi);
          }
        }
      }
    }
  }

  TEST_CASE("rasterize: mean conductivity never increases with a width") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      auto p = sample_params(Family::Fourier25, rng);
      const double before = rasterize(p, 17).mean();
      const auto hole = static_cast<std::size_t>(uniform_index(rng, 25));
      p.widths[hole] = std::min(1.0, p.widths[hole] + 0.05);
      CHECK(rasterize(p, 17).mean() <= before + 1e-15);
    }
  }

  TEST_CASE("rasterize: width derivative matches central differences") {
    Rng rng(3);
    for (auto f : {Family::Fourier16, Family::Fisher25, Family::Maxwell10}) {
      for (int trial = 0; trial < 5; ++trial) {
        auto p = sample_params(f, rng);
        const int res = family_info(f).physics == Physics::Helmholtz ? 10 : 13;
        const int hole = static_cast<int>(uniform_index(rng, p.widths.size()));
        const double h = 1e-7;
        auto plus = p, minus = p;
        plus.widths[hole] += h;
        minus.widths[hole] -= h;
        const auto gp = rasterize(plus, res);
        const auto gm = rasterize(minus, res);
        const auto d = rasterize_width_derivative(p, res, hole);
        double scale = 0.0;
        for (double v : d.values) scale = std::max(scale, std::abs(v));
        for (std::size_t k = 0; k < d.values.size(); ++k) {
          const double fd = (gp.values[k] - gm.values[k]) / (2 * h);
          CHECK(std::abs(fd - d.values[k]) <= 1e-6 * std::max(1.0, scale));
        }
      }
    }
  }

  TEST_CASE("rasterize rejects bad input") {
    auto p = zeros(Family::Fourier16);
    CHECK_THROWS_AS(rasterize(p, 0), ValidationError);
    p.widths.resize(3);
    CHECK_THROWS_AS(rasterize(p, 4), ValidationError);
  }

  TEST_CASE("project") {
    MaterialGrid g(4, 2, 0.25, 0.5, 1.0);
    g.at(0, 0) = 1.0;
    g.at(3, 0) = 0.1;
    ProjectionConfig cfg{true, 0.1, 1.0};
    const auto p = project(g, cfg);
    CHECK(p.at(0, 0) == doctest::Approx(0.55));
    CHECK(p.at(3, 0) == doctest::Approx(0.55));

    MaterialGrid sym(4, 1, 0.25, 1.0, 0.0);
    sym.values = {0.2, 0.7, 0.7, 0.2};
    CHECK(project(sym, cfg).values == sym.values);

    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
      MaterialGrid r(5, 3, 0.2, 0.3, 0.0);
      for (double& v : r.values) v = uniform(rng, -0.5, 1.7);
      for (bool mirror : {false, true}) {
        ProjectionConfig c{mirror, 0.1, 1.0};
        const auto once = project(r, c);
        const auto twice = project(once, c);
        CHECK(once.values == twice.values);
        for (double v : once.values) {
          CHECK(v >= 0.1);
          CHECK(v <= 1.0);
        }
      }
    }
  }

  TEST_CASE("project_vjp matches finite differences") {
    Rng rng(21);
    MaterialGrid g(5, 3, 0.2, 0.3, 0.0);
    for (double& v : g.values) v = uniform(rng, 0.0, 1.1);
    std::vector<double> cot(g.size());
    for (double& c : cot) c = uniform(rng, -1.0, 1.0);
    for (bool mirror : {false, true}) {
      ProjectionConfig cfg{mirror, 0.1, 1.0};
      const auto grad = project_vjp(g, cfg, cot);
      for (std::size_t k = 0; k < g.size(); ++k) {
        const double h = 1e-7;
        auto gp = g, gm = g;
        gp.values[k] += h;
        gm.values[k] -= h;
        const auto pp = project(gp, cfg), pm = project(gm, cfg);
        double fd = 0.0;
        for (std::size_t i = 0; i < cot.size(); ++i) fd += cot[i] * (pp.values[i] - pm.values[i]) / (2 * h);
        CHECK(grad[k] == doctest::Approx(fd).epsilon(1e-6));
      }
    }
  }

  TEST_CASE("mix") {
    MaterialGrid gen(2, 2, 0.5, 0.5, 0.0), down(2, 2, 0.5, 0.5, 0.0);
    gen.values = {0.3, 0.9, 0.1, 0.77};
    down.values = {1.0, 0.2, 0.4, 0.6};
    CHECK(mix(gen, down, 0.0).values == down.values);
    CHECK(mix(gen, down, 1.0).values == gen.values);
    for (double w : {0.0, 0.3, 0.75, 1.0}) CHECK(mix(down, down, w).values == down.values);
    const auto half = mix(gen, down, 0.5);
    CHECK(half.values[0] == doctest::Approx(0.65));
    CHECK_THROWS_AS(mix(gen, down, -0.1), ValidationError);
    CHECK_THROWS_AS(mix(gen, down, 1.5), ValidationError);
    MaterialGrid other(3, 1, 1.0 / 3, 1.0, 0.5);
    CHECK_THROWS_AS(mix(gen, other, 0.5), ValidationError);
  }

  TEST_CASE("sampling is seeded and in range") {
    Rng a(42), b(42);
    for (int i = 0; i < 10; ++i) {
      const auto p = sample_params(Family::Maxwell10, a);
      const auto q = sample_params(Family::Maxwell10, b);
      CHECK(p.widths == q.widths);
      CHECK(p.freq_index == q.freq_index);
      for (double w : p.widths) {
        CHECK(w >= 0.0);
        CHECK(w <= kMaxSampledWidth);
      }
    }
  }
}
