// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <vector>

#include "peds/error.hpp"
#include "peds/parallel.hpp"
#include "peds/training.hpp"

using namespace peds;

namespace {

NetworkOptions tiny_network() {
  NetworkOptions o;
  o.generator_hidden = {16};
  o.sigma_hidden = {4};
  return o;
}

// Cheap synthetic targets: the low-fidelity value, rescaled.
std::vector<TrainingSample> synthetic_data(Family f, int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TrainingSample> out;
  for (int i = 0; i < n; ++i) {
    auto p = sample_params(f, rng);
    auto t = low_fidelity_baseline(p);
    for (double& v : t) v = 0.8 * v + 0.05;
    out.push_back({std::move(p), std::move(t)});
  }
  return out;
}

TrainConfig quick_config(int epochs, std::uint64_t seed = 1) {
  TrainConfig cfg;
  cfg.loss = {LossConfig::Kind::Huber, 1e-3};
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.learning_rate = 1e-3;
  cfg.patience = epochs + 1;
  cfg.seed = seed;
  return cfg;
}

double distance(const GeometryParams& a, const GeometryParams& b) {
  const auto x = a.features(), y = b.features();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(s);
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("split is deterministic, disjoint and sized") {
    const auto a = split_indices(100, 0.1, 5);
    const auto b = split_indices(100, 0.1, 5);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    CHECK(a.val.size() == 10);
    CHECK(a.train.size() == 90);
    std::set<std::size_t> all(a.train.begin(), a.train.end());
    all.insert(a.val.begin(), a.val.end());
    CHECK(all.size() == 100);
    CHECK(split_indices(100, 0.1, 6).val != a.val);
    CHECK(split_indices(1, 0.1, 5).val.empty());
    CHECK(split_indices(4, 0.1, 5).val.empty());
  }

  TEST_CASE("one-point memorization") {
    const auto data = synthetic_data(Family::Fourier16, 1, 3);
    MlpSurrogate nn(Family::Fourier16, tiny_network(), 2);
    auto cfg = quick_config(3000);
    cfg.learning_rate = 1e-2;
    const auto r = train(nn, data, cfg);
    CHECK(r.train_loss < 1e-6);
    CHECK(r.val_size == 0);

    PedsModel peds(Family::Fourier16, tiny_network(), 2);
    const auto rp = train(peds, data, cfg);
    CHECK(rp.train_loss < 1e-6);
  }

  TEST_CASE("history records the initial state and every epoch") {
    const auto data = synthetic_data(Family::Fourier16, 40, 4);
    PedsModel m(Family::Fourier16, tiny_network(), 3);
    std::vector<EpochRecord> seen;
    auto cfg = quick_config(5);
    cfg.on_epoch = [&](const EpochRecord& r) { seen.push_back(r); };
    const auto r = train(m, data, cfg);
    REQUIRE(r.history.size() == 6);
    CHECK(seen.size() == 6);
    CHECK(r.history[0].epoch == 0);
    CHECK(r.history[0].w == doctest::Approx(0.05));
    CHECK(r.history[5].epoch == 5);
    CHECK(r.train_size == 36);
    CHECK(r.val_size == 4);
    const nlohmann::json j = r.history[1];
    for (const char* key : {"epoch", "train_loss", "val_loss", "w", "wallclock"}) CHECK(j.contains(key));
  }

  TEST_CASE("seeded determinism") {
    const auto data = synthetic_data(Family::Fourier16, 50, 5);
    auto run = [&](std::uint64_t seed) {
      PedsModel m(Family::Fourier16, tiny_network(), 7);
      train(m, data, quick_config(4, seed));
      return std::vector<double>(m.parameters().begin(), m.parameters().end());
    };
    CHECK(run(11) == run(11));
    CHECK(run(11) != run(12));
  }

  TEST_CASE("serial and parallel training give identical weights") {
    const auto data = synthetic_data(Family::Fourier16, 50, 6);
    auto run = [&](bool parallel) {
      PedsModel m(Family::Fourier16, tiny_network(), 8);
      auto cfg = quick_config(3);
      cfg.parallel = parallel;
      train(m, data, cfg);
      return std::vector<double>(m.parameters().begin(), m.parameters().end());
    };
    CHECK(run(true) == run(false));
  }

  TEST_CASE("w frozen at zero matches the low-fidelity baseline") {
    const auto data = synthetic_data(Family::Fourier16, 60, 7);
    PedsModel m(Family::Fourier16, tiny_network(), 9);
    m.set_w(0.0);
    const auto r = train(m, data, quick_config(5));
    CHECK(m.w() == 0.0);
    LowFidelityBaseline lf(Family::Fourier16);
    const auto split = split_indices(data.size(), 0.1, 1);
    std::vector<TrainingSample> val;
    for (auto i : split.val) val.push_back(data[i]);
    const LossConfig loss{LossConfig::Kind::Huber, 1e-3};
    CHECK(r.best_val_loss == doctest::Approx(mean_loss(lf, val, loss)).epsilon(1e-12));
    for (const auto& s : data) CHECK(m.predict(s.params).mean == lf.predict(s.params).mean);
  }

  TEST_CASE("training never ends worse than w = 0") {
    const auto data = synthetic_data(Family::Fisher16, 60, 8);
    for (double lr : {1e-3, 5e-2}) {
      PedsModel m(Family::Fisher16, tiny_network(), 10);
      auto cfg = quick_config(6);
      cfg.learning_rate = lr;
      const auto r = train(m, data, cfg);
      CHECK(r.train_loss <= r.lf_train_loss);
      if (r.reverted_to_lf) CHECK(m.w() == 0.0);
    }
  }

  TEST_CASE("early stopping and wall-clock cap") {
    const auto data = synthetic_data(Family::Fourier16, 30, 9);
    MlpSurrogate m(Family::Fourier16, tiny_network(), 3);
    auto cfg = quick_config(500);
    cfg.patience = 3;
    cfg.learning_rate = 0.5;  // diverging steps stop improving quickly
    const auto r = train(m, data, cfg);
    CHECK(static_cast<int>(r.history.size()) - 1 <= r.best_epoch + 3);
    MlpSurrogate m2(Family::Fourier16, tiny_network(), 3);
    cfg = quick_config(100000);
    cfg.wallclock_limit = 0.2;
    const auto r2 = train(m2, data, cfg);
    CHECK(r2.history.back().wallclock < 5.0);
  }

  TEST_CASE("non-finite loss aborts with the last good parameters") {
    auto data = synthetic_data(Family::Fourier16, 20, 10);
    data[3].target[0] = std::numeric_limits<double>::infinity();
    MlpSurrogate m(Family::Fourier16, tiny_network(), 4);
    const auto before = std::vector<double>(m.parameters().begin(), m.parameters().end());
    auto cfg = quick_config(5);
    cfg.validation_fraction = 0.0;
    const auto r = train(m, data, cfg);
    CHECK(r.aborted);
    CHECK(!r.diagnostics.empty());
    CHECK(std::vector<double>(m.parameters().begin(), m.parameters().end()) == before);
  }

  TEST_CASE("invalid configuration is rejected") {
    const auto data = synthetic_data(Family::Fourier16, 5, 11);
    MlpSurrogate m(Family::Fourier16, tiny_network(), 4);
    auto cfg = quick_config(1);
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train(m, data, cfg), ValidationError);
    CHECK_THROWS_AS(train(m, std::span<const TrainingSample>{}, quick_config(1)), ValidationError);
    const auto other = synthetic_data(Family::Fisher16, 3, 1);
    CHECK_THROWS_AS(train(m, other, quick_config(1)), ValidationError);
  }

  TEST_CASE("ensemble members differ and are reproducible") {
    const auto data = synthetic_data(Family::Fourier16, 30, 12);
    const ModelFactory factory = [](std::uint64_t s) { return std::make_unique<PedsModel>(Family::Fourier16, tiny_network(), s); };
    const auto a = train_ensemble(factory, data, quick_config(2), 3);
    const auto b = train_ensemble(factory, data, quick_config(2), 3);
    REQUIRE(a.size() == 3);
    const auto p0 = a.member(0).parameters(), p1 = a.member(1).parameters();
    CHECK(!std::equal(p0.begin(), p0.end(), p1.begin()));
    for (std::size_t i = 0; i < 3; ++i) {
      const auto x = a.member(i).parameters(), y = b.member(i).parameters();
      CHECK(std::equal(x.begin(), x.end(), y.begin()));
    }
  }

  TEST_CASE("select_top_k") {
    const std::vector<double> s{0.5, 2.0, NAN, 2.0, -1.0, 3.0};
    CHECK(select_top_k(s, 3) == std::vector<std::size_t>{5, 1, 3});
    CHECK(select_top_k(s, 6) == std::vector<std::size_t>{5, 1, 3, 0, 4, 2});
    CHECK(select_top_k(s, 10).size() == 6);
    CHECK(select_top_k(s, 0).empty());
  }

  TEST_CASE("active learning: T = 0 trains on the initial points only") {
    AlConfig cfg;
    cfg.n_init = 20;
    cfg.iterations = 0;
    cfg.ensemble_size = 2;
    cfg.initial_training = quick_config(2);
    cfg.retraining = quick_config(1);
    int calls = 0;
    const Oracle oracle = [&](const GeometryParams& p) {
      ++calls;
      return low_fidelity_baseline(p);
    };
    const ModelFactory factory = [](std::uint64_t s) { return std::make_unique<MlpSurrogate>(Family::Fourier16, tiny_network(), s); };
    const auto r = active_learn(cfg, Family::Fourier16, factory, oracle, 3);
    CHECK(r.dataset.size() == 20);
    CHECK(r.sizes == std::vector<std::size_t>{20});
    CHECK(calls == 20);
    for (const auto& a : r.log) CHECK(a.iteration == 0);
    CHECK(r.ensemble.size() == 2);
  }

  TEST_CASE("active learning: growth, uniform acquisition and skips") {
    AlConfig cfg;
    cfg.n_init = 10;
    cfg.iterations = 3;
    cfg.m = 1;
    cfg.k = 5;
    cfg.ensemble_size = 1;
    cfg.initial_training = quick_config(1);
    cfg.retraining = quick_config(1);
    const ModelFactory factory = [](std::uint64_t s) { return std::make_unique<MlpSurrogate>(Family::Fourier16, tiny_network(), s); };
    int scored = 0;
    const AcquisitionScorer scorer = [&](const Ensemble&, std::span<const GeometryParams> c, std::span<const TrainingSample>) {
      ++scored;
      return std::vector<double>(c.size(), 0.0);
    };
    const Oracle oracle = [](const GeometryParams& p) { return low_fidelity_baseline(p); };
    const auto r = active_learn(cfg, Family::Fourier16, factory, oracle, 4, scorer);
    CHECK(scored == 0);
    CHECK(r.sizes == std::vector<std::size_t>{10, 15, 20, 25});
    CHECK(r.log.size() == 25);
    std::vector<int> ranks;
    for (const auto& a : r.log) {
      CHECK(a.acquired);
      if (a.iteration == 1) ranks.push_back(a.rank);
    }
    CHECK(ranks == std::vector<int>{0, 1, 2, 3, 4});

    // An oracle that fails on every third call: failures are logged and skipped.
    int call = 0;
    const Oracle flaky = [&](const GeometryParams& p) -> std::vector<double> {
      if (++call > 10 && call % 3 == 0) throw SolverError("synthetic failure");
      return low_fidelity_baseline(p);
    };
    const auto f = active_learn(cfg, Family::Fourier16, factory, flaky, 4, scorer);
    CHECK(f.skipped > 0);
    CHECK(f.sizes.back() == 25 - f.skipped);
    std::size_t failed = 0;
    for (const auto& a : f.log) {
      if (!a.acquired) {
        ++failed;
        CHECK(!a.error.empty());
      }
    }
    CHECK(failed == f.skipped);
    const auto dup = active_learn(cfg, Family::Fourier16, factory, oracle, 4, scorer);
    CHECK(dup.dataset.size() == r.dataset.size());
    for (std::size_t i = 0; i < dup.dataset.size(); ++i) CHECK(dup.dataset[i].params.widths == r.dataset[i].params.widths);
  }

  TEST_CASE("active learning: distance scorer picks the farthest candidates") {
    AlConfig cfg;
    cfg.n_init = 8;
    cfg.iterations = 2;
    cfg.m = 4;
    cfg.k = 3;
    cfg.ensemble_size = 1;
    cfg.initial_training = quick_config(1);
    cfg.retraining = quick_config(1);
    const ModelFactory factory = [](std::uint64_t s) { return std::make_unique<MlpSurrogate>(Family::Fourier16, tiny_network(), s); };
    std::vector<std::vector<GeometryParams>> pools;
    std::vector<std::vector<GeometryParams>> trains;
    const AcquisitionScorer scorer = [&](const Ensemble&, std::span<const GeometryParams> c, std::span<const TrainingSample> t) {
      pools.emplace_back(c.begin(), c.end());
      trains.emplace_back();
      for (const auto& s : t) trains.back().push_back(s.params);
      std::vector<double> out;
      for (const auto& p : c) {
        double best = INFINITY;
        for (const auto& s : t) best = std::min(best, distance(p, s.params));
        out.push_back(best);
      }
      return out;
    };
    const Oracle oracle = [](const GeometryParams& p) { return low_fidelity_baseline(p); };
    const auto r = active_learn(cfg, Family::Fourier16, factory, oracle, 5, scorer);
    REQUIRE(pools.size() == 2);
    for (std::size_t it = 0; it < 2; ++it) {
      REQUIRE(pools[it].size() == 12);
      // Brute force: sort every candidate by its nearest-neighbour distance.
      std::vector<std::pair<double, std::size_t>> ranked;
      for (std::size_t i = 0; i < pools[it].size(); ++i) {
        double best = INFINITY;
        for (const auto& q : trains[it]) best = std::min(best, distance(pools[it][i], q));
        ranked.push_back({-best, i});
      }
      std::sort(ranked.begin(), ranked.end());
      std::vector<std::vector<double>> expected, got;
      for (int j = 0; j < 3; ++j) expected.push_back(pools[it][ranked[static_cast<std::size_t>(j)].second].widths);
      for (const auto& a : r.log) {
        if (a.iteration == static_cast<int>(it) + 1) got.push_back(a.params.widths);
      }
      CHECK(got == expected);
    }
  }

  TEST_CASE("active learning configuration is validated") {
    AlConfig cfg;
    cfg.k = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = AlConfig{};
    cfg.m = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = AlConfig{};
    const nlohmann::json j = cfg;
    CHECK(j.at("M") == 4);
    CHECK(j.at("K") == 32);
  }
}

TEST_SUITE("parallel") {
  TEST_CASE("serial and parallel batch gradients are bitwise identical") {
    const auto data = synthetic_data(Family::Fourier25, 45, 20);
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const LossConfig loss{LossConfig::Kind::GaussianNll, 1e-3};
    PedsModel m(Family::Fourier25, tiny_network(), 3, 0.2);
    const auto s = batch_gradient_serial(m, data, idx, loss);
    for (int threads : {1, 2, 3, 8}) {
      omp_set_num_threads(threads);
      const auto p = batch_gradient_parallel(m, data, idx, loss);
      CHECK(p.loss == s.loss);
      CHECK(p.grad == s.grad);
      CHECK(mean_loss(m, data, loss, true) == mean_loss(m, data, loss, false));
    }
    omp_set_num_threads(omp_get_num_procs());
  }

  TEST_CASE("batch gradient is the mean of per-sample gradients") {
    const auto data = synthetic_data(Family::Fourier16, 10, 21);
    std::vector<std::size_t> idx{0, 3, 4, 9};
    const LossConfig loss{LossConfig::Kind::Huber, 1e-3};
    PedsModel m(Family::Fourier16, tiny_network(), 3);
    std::vector<double> manual(m.parameters().size(), 0.0);
    double total = 0.0;
    for (auto i : idx) total += m.accumulate_gradient(data[i], loss, manual);
    const auto g = batch_gradient_serial(m, data, idx, loss);
    CHECK(g.loss == doctest::Approx(total / 4.0).epsilon(1e-14));
    for (std::size_t k = 0; k < manual.size(); ++k) CHECK(g.grad[k] == doctest::Approx(manual[k] / 4.0).epsilon(1e-12));
  }

  TEST_CASE("parallel_map keeps order and rethrows") {
    const auto v = parallel_map<int>(100, [](std::size_t i) { return static_cast<int>(i * i); });
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == static_cast<int>(i * i));
    CHECK_THROWS_AS(parallel_map<int>(10,
                                      [](std::size_t i) -> int {
                                        if (i == 7) throw SolverError("boom");
                                        return 0;
                                      }),
                    SolverError);
  }
}
