// SPDX-License-Identifier: Apache-2.0

#include "peds/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "peds/error.hpp"
#include "peds/parallel.hpp"
#include "peds/random.hpp"

namespace peds {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<TrainingSample> gather(std::span<const TrainingSample> data, std::span<const std::size_t> idx) {
  std::vector<TrainingSample> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(data[i]);
  return out;
}

void check_dataset(const Surrogate& model, std::span<const TrainingSample> data) {
  if (data.empty()) throw ValidationError("training set is empty");
  const auto dim = static_cast<std::size_t>(family_info(model.family()).target_dim);
  for (const auto& s : data) {
    if (s.params.family != model.family()) throw ValidationError("training sample from a different family");
    if (s.target.size() != dim) throw ValidationError("training target has the wrong dimension");
  }
}

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

void to_json(nlohmann::json& j, const EpochRecord& r) {
  j = {{"epoch", r.epoch},
       {"train_loss", finite_or_null(r.train_loss)},
       {"val_loss", finite_or_null(r.val_loss)},
       {"w", finite_or_null(r.w)},
       {"wallclock", r.wallclock}};
}

Split split_indices(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ValidationError("validation fraction must lie in [0, 1)");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "split"));
  shuffle(perm.begin(), perm.end(), rng);
  auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n < 2) n_val = 0;
  Split s;
  s.val.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

TrainResult train(Surrogate& model, std::span<const TrainingSample> data, const TrainConfig& cfg) {
  check_dataset(model, data);
  if (cfg.batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (cfg.epochs < 0) throw ValidationError("epochs must be >= 0");
  if (cfg.patience < 1) throw ValidationError("patience must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw ValidationError("learning rate must be > 0");

  const auto start = Clock::now();
  const auto split = split_indices(data.size(), cfg.validation_fraction, cfg.seed);
  const auto train_set = gather(data, split.train);
  // Tiny sets have no held-out part; select on the training loss instead.
  const auto val_set = split.val.empty() ? train_set : gather(data, split.val);

  TrainResult result;
  result.train_size = train_set.size();
  result.val_size = split.val.size();
  result.lf_train_loss = std::numeric_limits<double>::quiet_NaN();

  auto params = model.parameters();
  AdamState adam(params.size(), cfg.learning_rate);
  Rng rng(derive_seed(cfg.seed, "shuffle"));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  auto emit = [&](const EpochRecord& r) {
    result.history.push_back(r);
    if (cfg.on_epoch) cfg.on_epoch(r);
  };

  EpochRecord initial{0, mean_loss(model, train_set, cfg.loss, cfg.parallel),
                      mean_loss(model, val_set, cfg.loss, cfg.parallel), model.mixing_weight(), seconds_since(start)};
  emit(initial);
  std::vector<double> best(params.begin(), params.end());
  result.best_epoch = 0;
  result.best_val_loss = initial.val_loss;
  if (!std::isfinite(initial.val_loss)) {
    result.aborted = true;
    result.diagnostics = "non-finite loss at initialization";
    return result;
  }

  for (int epoch = 1; epoch <= cfg.epochs && !params.empty(); ++epoch) {
    shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::string failure;
    for (std::size_t b = 0; b < order.size() && failure.empty(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const auto e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      const std::span<const std::size_t> batch(order.data() + b, e - b);
      try {
        const auto g = cfg.parallel ? batch_gradient_parallel(model, train_set, batch, cfg.loss)
                                    : batch_gradient_serial(model, train_set, batch, cfg.loss);
        if (!std::isfinite(g.loss)) {
          failure = "non-finite training loss";
          break;
        }
        adam_step(adam, params, g.grad);
        loss_sum += g.loss * static_cast<double>(batch.size());
      } catch (const SolverError& err) {
        failure = err.what();
      }
    }
    const double val = failure.empty() ? mean_loss(model, val_set, cfg.loss, cfg.parallel)
                                       : std::numeric_limits<double>::quiet_NaN();
    if (failure.empty() && !std::isfinite(val)) failure = "non-finite validation loss";
    if (!failure.empty()) {
      result.aborted = true;
      result.diagnostics = "epoch " + std::to_string(epoch) + ": " + failure;
      break;
    }
    emit({epoch, loss_sum / static_cast<double>(order.size()), val, model.mixing_weight(), seconds_since(start)});
    if (val < result.best_val_loss) {
      result.best_val_loss = val;
      result.best_epoch = epoch;
      best.assign(params.begin(), params.end());
    } else if (epoch - result.best_epoch >= cfg.patience) {
      break;
    }
    if (cfg.wallclock_limit > 0.0 && seconds_since(start) >= cfg.wallclock_limit) break;
  }

  std::copy(best.begin(), best.end(), params.begin());
  result.train_loss = mean_loss(model, train_set, cfg.loss, cfg.parallel);

  if (auto* peds = dynamic_cast<PedsModel*>(&model); peds != nullptr && cfg.non_degradation) {
    PedsModel lf = *peds;
    lf.set_w(0.0);
    result.lf_train_loss = mean_loss(lf, train_set, cfg.loss, cfg.parallel);
    if (result.lf_train_loss < result.train_loss) {
      peds->set_w(0.0);
      result.train_loss = result.lf_train_loss;
      result.reverted_to_lf = true;
    }
  }
  return result;
}

Ensemble train_ensemble(const ModelFactory& factory, std::span<const TrainingSample> data, const TrainConfig& cfg,
                        int members, std::vector<TrainResult>* results) {
  if (members < 1) throw ValidationError("ensemble size must be >= 1");
  Ensemble ensemble;
  for (int i = 0; i < members; ++i) {
    auto model = factory(derive_seed(cfg.seed, "member", static_cast<std::uint64_t>(i)));
    TrainConfig member_cfg = cfg;
    member_cfg.seed = derive_seed(cfg.seed, "member-train", static_cast<std::uint64_t>(i));
    auto r = train(*model, data, member_cfg);
    if (results != nullptr) results->push_back(std::move(r));
    ensemble.add(std::move(model));
  }
  return ensemble;
}

void retrain_ensemble(Ensemble& ensemble, std::span<const TrainingSample> data, const TrainConfig& cfg,
                      std::vector<TrainResult>* results) {
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    TrainConfig member_cfg = cfg;
    member_cfg.seed = derive_seed(cfg.seed, "member-train", i);
    auto r = train(ensemble.member(i), data, member_cfg);
    if (results != nullptr) results->push_back(std::move(r));
  }
}

Ensemble train_nn_only_baseline(Family family, std::span<const TrainingSample> data, const TrainConfig& cfg,
                                int members, const NetworkOptions& options) {
  return train_ensemble([&](std::uint64_t s) { return std::make_unique<MlpSurrogate>(family, options, s); }, data,
                        cfg, members);
}

// ---------------------------------------------------------------------------

void AlConfig::validate() const {
  if (n_init < 1 || iterations < 0 || m < 1 || k < 1 || ensemble_size < 1) {
    throw ValidationError("active learning needs n_init, M, K, ensemble size >= 1 and T >= 0");
  }
}

void to_json(nlohmann::json& j, const AlConfig& c) {
  j = {{"n_init", c.n_init}, {"T", c.iterations},        {"M", c.m},
       {"K", c.k},           {"ensemble", c.ensemble_size}, {"warm_start", c.warm_start}};
}

void to_json(nlohmann::json& j, const Acquisition& a) {
  j = {{"iteration", a.iteration}, {"params", a.params},     {"score", finite_or_null(a.score)},
       {"rank", a.rank},           {"acquired", a.acquired}};
  if (!a.error.empty()) j["error"] = a.error;
}

AcquisitionScorer ensemble_variance_scorer() {
  return [](const Ensemble& e, std::span<const GeometryParams> candidates, std::span<const TrainingSample>) {
    return parallel_map<double>(candidates.size(),
                                [&](std::size_t i) { return ensemble_predict(e, candidates[i]).total_variance(); });
  };
}

std::vector<std::size_t> select_top_k(std::span<const double> scores, std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double sa = std::isnan(scores[a]) ? -std::numeric_limits<double>::infinity() : scores[a];
                      const double sb = std::isnan(scores[b]) ? -std::numeric_limits<double>::infinity() : scores[b];
                      return sa > sb || (sa == sb && a < b);
                    });
  idx.resize(k);
  return idx;
}

namespace {

// Runs the oracle on every point; failures come back as an error string.
std::vector<std::pair<std::optional<std::vector<double>>, std::string>> query(const Oracle& oracle,
                                                                               std::span<const GeometryParams> pts) {
  using Outcome = std::pair<std::optional<std::vector<double>>, std::string>;
  return parallel_map<Outcome>(pts.size(), [&](std::size_t i) -> Outcome {
    try {
      return {oracle(pts[i]), {}};
    } catch (const std::exception& e) {
      return {std::nullopt, e.what()};
    }
  });
}

}  // namespace

AlResult active_learn(const AlConfig& cfg, Family family, const ModelFactory& factory, const Oracle& oracle,
                      std::uint64_t seed, const AcquisitionScorer& scorer) {
  cfg.validate();
  const auto score = scorer ? scorer : ensemble_variance_scorer();
  AlResult result;

  auto acquire = [&](int iteration, std::span<const GeometryParams> pts, std::span<const double> scores,
                     std::span<const int> ranks) {
    const auto outcomes = query(oracle, pts);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      Acquisition a{iteration, pts[i], scores[i], ranks[i], outcomes[i].first.has_value(), outcomes[i].second};
      if (a.acquired) {
        result.dataset.push_back({pts[i], *outcomes[i].first});
      } else {
        ++result.skipped;
      }
      result.log.push_back(std::move(a));
    }
    result.sizes.push_back(result.dataset.size());
  };

  {
    Rng rng(derive_seed(seed, "al-init"));
    std::vector<GeometryParams> pts;
    for (int i = 0; i < cfg.n_init; ++i) pts.push_back(sample_params(family, rng));
    const std::vector<double> scores(pts.size(), std::numeric_limits<double>::quiet_NaN());
    std::vector<int> ranks(pts.size());
    std::iota(ranks.begin(), ranks.end(), 0);
    acquire(0, pts, scores, ranks);
  }
  if (result.dataset.empty()) throw SolverError("oracle failed on every initial point");

  TrainConfig init_cfg = cfg.initial_training;
  init_cfg.seed = derive_seed(seed, "al-train", 0);
  result.ensemble = train_ensemble(factory, result.dataset, init_cfg, cfg.ensemble_size);

  for (int t = 1; t <= cfg.iterations; ++t) {
    Rng rng(derive_seed(seed, "al-candidates", static_cast<std::uint64_t>(t)));
    const auto pool_size = static_cast<std::size_t>(cfg.m) * static_cast<std::size_t>(cfg.k);
    std::vector<GeometryParams> pool;
    pool.reserve(pool_size);
    for (std::size_t i = 0; i < pool_size; ++i) pool.push_back(sample_params(family, rng));

    std::vector<double> pool_scores(pool_size, std::numeric_limits<double>::quiet_NaN());
    std::vector<std::size_t> chosen(pool_size);
    std::iota(chosen.begin(), chosen.end(), std::size_t{0});
    if (cfg.m > 1) {
      pool_scores = score(result.ensemble, pool, result.dataset);
      if (pool_scores.size() != pool_size) throw ValidationError("scorer returned the wrong number of scores");
      chosen = select_top_k(pool_scores, static_cast<std::size_t>(cfg.k));
    }
    std::vector<GeometryParams> pts;
    std::vector<double> scores;
    std::vector<int> ranks;
    for (std::size_t r = 0; r < chosen.size(); ++r) {
      pts.push_back(pool[chosen[r]]);
      scores.push_back(pool_scores[chosen[r]]);
      ranks.push_back(static_cast<int>(r));
    }
    acquire(t, pts, scores, ranks);

    if (cfg.warm_start) {
      TrainConfig re = cfg.retraining;
      re.seed = derive_seed(seed, "al-train", static_cast<std::uint64_t>(t));
      retrain_ensemble(result.ensemble, result.dataset, re);
    } else {
      TrainConfig fresh = cfg.initial_training;
      fresh.seed = derive_seed(seed, "al-train", static_cast<std::uint64_t>(t));
      result.ensemble = train_ensemble(factory, result.dataset, fresh, cfg.ensemble_size);
    }
  }
  return result;
}

}  // namespace peds
