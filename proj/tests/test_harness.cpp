// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "peds/error.hpp"
#include "peds/harness.hpp"

using namespace peds;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("peds_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string serialize(const Dataset& d) {
  std::ostringstream os;
  write_dataset(os, d);
  return os.str();
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("fractional error") {
    const std::vector<std::vector<double>> t{{2.0}, {4.0}, {-1.0}};
    CHECK(fractional_error(t, t).value == 0.0);
    const std::vector<std::vector<double>> p{{2.2}, {4.4}, {-1.1}};
    CHECK(fractional_error(p, t).value == doctest::Approx(0.1).epsilon(1e-12));

    // Complex targets use the Euclidean norm of (Re, Im).
    const std::vector<std::vector<double>> tc{{3.0, 4.0}}, pc{{3.0, 3.0}};
    CHECK(fractional_error(pc, tc).value == doctest::Approx(0.2));

    const std::vector<std::vector<double>> tz{{0.0}, {2.0}}, pz{{0.5}, {3.0}};
    const auto fe = fractional_error(pz, tz);
    CHECK(fe.excluded == 1);
    CHECK(std::isnan(fe.per_sample[0]));
    CHECK(fe.value == doctest::Approx(0.5));

    CHECK_THROWS_AS(fractional_error({{1.0}}, {{0.0}}), ValidationError);
    CHECK_THROWS_AS(fractional_error({}, {}), ValidationError);
    CHECK_THROWS_AS(fractional_error({{1.0}}, {{1.0}, {2.0}}), ValidationError);
  }

  TEST_CASE("dataset round trip is byte identical") {
    GenDataConfig cfg;
    cfg.family = Family::Maxwell10;
    cfg.n = 4;
    cfg.resolution = 10;
    cfg.seed = 3;
    const auto d = gen_data(cfg);
    const auto text = serialize(d);
    std::istringstream is(text);
    const auto back = read_dataset(is);
    CHECK(serialize(back) == text);
    CHECK(back.meta.stream == "train");
    CHECK(back.samples[2].target == d.samples[2].target);
    CHECK(back.samples[2].params.freq_index == d.samples[2].params.freq_index);

    const auto dir = scratch_dir("roundtrip");
    save_dataset(dir / "d.jsonl", d);
    CHECK(read_file(dir / "d.jsonl") == text);
    CHECK(std::filesystem::exists(dir / "d.jsonl.timing.json"));
    CHECK(load_dataset(dir / "d.jsonl").point_seconds.size() == 4);
  }

  TEST_CASE("malformed datasets are rejected") {
    std::istringstream empty("");
    CHECK_THROWS_AS(read_dataset(empty), ValidationError);
    std::istringstream junk("{\"format\":\"other\"}\n");
    CHECK_THROWS_AS(read_dataset(junk), ValidationError);

    GenDataConfig cfg;
    cfg.n = 2;
    cfg.resolution = 8;
    auto d = gen_data(cfg);
    auto text = serialize(d);
    std::istringstream truncated(text.substr(0, text.rfind('{')));
    CHECK_THROWS_AS(read_dataset(truncated), ValidationError);

    d.samples.push_back(d.samples[0]);
    CHECK_THROWS_AS(d.validate(), ValidationError);
  }

  TEST_CASE("data generation is reproducible and thread-count independent") {
    GenDataConfig cfg;
    cfg.family = Family::Fourier16;
    cfg.n = 100;
    cfg.resolution = 20;
    cfg.seed = 11;
    const auto a = serialize(gen_data(cfg));
    const auto b = serialize(gen_data(cfg));
    CHECK(a == b);
    cfg.parallel = false;
    CHECK(serialize(gen_data(cfg)) == a);
    cfg.seed = 12;
    CHECK(serialize(gen_data(cfg)) != a);
  }

  TEST_CASE("train and test streams are disjoint") {
    GenDataConfig cfg;
    cfg.family = Family::Fisher25;
    cfg.n = 30;
    cfg.resolution = 10;
    cfg.seed = 5;
    const auto train = gen_data(cfg);
    cfg.stream = "test";
    const auto test = gen_data(cfg);
    for (const auto& t : test.samples) {
      for (const auto& s : train.samples) CHECK(t.params.widths != s.params.widths);
    }
  }

  TEST_CASE("empty geometry has unit conductivity") {
    GeometryParams p;
    p.family = Family::Fourier25;
    p.widths.assign(25, 0.0);
    const auto d = gen_data_for(Family::Fourier25, {p}, 50, 0);
    CHECK(d.samples[0].target[0] == doctest::Approx(1.0).epsilon(1e-8));
    GeometryParams q = p;
    q.family = Family::Fisher25;
    CHECK_THROWS_AS(gen_data_for(Family::Fourier25, {q}, 50, 0), ValidationError);
  }

  TEST_CASE("data cache reuses files") {
    const auto dir = scratch_dir("cache");
    GenDataConfig cfg;
    cfg.n = 5;
    cfg.resolution = 12;
    cfg.seed = 2;
    const auto a = cached_gen_data(cfg, dir);
    const auto path = dir / "fourier16_train_n5_r12_s2.jsonl";
    REQUIRE(std::filesystem::exists(path));
    const auto stamp = std::filesystem::last_write_time(path);
    const auto b = cached_gen_data(cfg, dir);
    CHECK(std::filesystem::last_write_time(path) == stamp);
    CHECK(serialize(a) == serialize(b));
  }

  TEST_CASE("experiment report arithmetic and zero-epoch baseline") {
    ExperimentConfig cfg;
    cfg.family = Family::Fourier16;
    cfg.n_train = 40;
    cfg.n_test = 25;
    cfg.seed = 9;
    cfg.resolution = 20;
    cfg.ensemble = 2;
    cfg.train = default_train_config(cfg.family);
    cfg.train.epochs = 0;
    cfg.network.generator_hidden = {16};
    cfg.network.sigma_hidden = {4};
    cfg.run_nn_only = false;
    cfg.measure_speedup = false;
    const auto r = run_experiment(cfg);
    REQUIRE(r.peds.has_value());
    CHECK(r.peds->status == "ok");

    // Untrained PEDS mixes in 5% of a random generator, so it stays near the coarse solver.
    CHECK(std::abs(r.peds->fe.value - r.low_fidelity.fe.value) <= 0.25 * r.low_fidelity.fe.value);

    auto mean_of = [](const std::vector<double>& v) {
      double s = 0.0;
      std::size_t n = 0;
      for (double x : v) {
        if (std::isfinite(x)) {
          s += x;
          ++n;
        }
      }
      return s / static_cast<double>(n);
    };
    const double recomputed = mean_of(r.low_fidelity.fe.per_sample) / mean_of(r.peds->fe.per_sample);
    CHECK(std::abs(recomputed - r.improvement()) <= 1e-12 * r.improvement());

    const auto j = r.peds->to_json();
    CHECK(j.at("format") == "peds-eval-report");
    CHECK(j.at("per_sample_errors").size() == 25);
    CHECK(j.at("fractional_error").get<double>() == r.peds->fe.value);
    CHECK(j.at("w").size() == 2);
    CHECK(r.summary().at("improvement").get<double>() == r.improvement());
  }

  TEST_CASE("oracle cache memoizes and persists") {
    OracleCache cache(10);
    Rng rng(4);
    const auto p = sample_params(Family::Maxwell10, rng);
    const auto a = cache(p);
    const auto b = cache(p);
    CHECK(a == b);
    CHECK(cache.size() == 1);
    CHECK(cache.hits() == 1);
    const auto dir = scratch_dir("oracle");
    cache.save(dir / "o.jsonl");
    OracleCache other(10);
    other.load(dir / "o.jsonl");
    CHECK(other.size() == 1);
    CHECK(other(p) == a);
    CHECK(other.hits() == 1);
  }

  TEST_CASE("active-learning budget arithmetic") {
    AlConfig al;
    al.n_init = 64;
    al.k = 32;
    CHECK(al_iterations_for_budget(al, 1024) == 30);
    CHECK(al_iterations_for_budget(al, 64) == 0);
    CHECK_THROWS_AS(al_iterations_for_budget(al, 1000), ValidationError);
    CHECK_THROWS_AS(al_iterations_for_budget(al, 10), ValidationError);
  }
}
