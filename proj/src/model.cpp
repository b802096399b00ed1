// SPDX-License-Identifier: Apache-2.0

#include "peds/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "peds/error.hpp"

namespace peds {
namespace {

constexpr int kCheckpointVersion = 1;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

int input_dim(Family family) {
  const auto& info = family_info(family);
  return info.hole_count + info.frequency_count;
}

nlohmann::json net_json(const MlpLayout& layout, std::span<const double> params) {
  return {{"layout", layout}, {"params", std::vector<double>(params.begin(), params.end())}};
}

std::vector<double> read_params(const nlohmann::json& j, const MlpLayout& layout) {
  auto params = j.at("params").get<std::vector<double>>();
  if (params.size() != layout.param_count()) throw ValidationError("checkpoint parameter count mismatch");
  return params;
}

void check_header(const nlohmann::json& j, const char* kind) {
  if (j.value("format", "") != "peds-checkpoint") throw ValidationError("not a peds checkpoint");
  if (j.value("version", 0) != kCheckpointVersion) throw ValidationError("unsupported checkpoint version");
  if (j.value("kind", "") != kind) throw ValidationError(std::string("checkpoint is not of kind ") + kind);
}

MlpLayout make_sigma_layout(Family family, const NetworkOptions& options) {
  OutputActivation act;
  act.kind = OutputKind::Softplus;
  act.floor = 1e-6;
  return MlpLayout(layer_sizes(input_dim(family), options.sigma_hidden, 1), act);
}

}  // namespace

double Surrogate::mixing_weight() const { return std::numeric_limits<double>::quiet_NaN(); }

std::unique_ptr<Surrogate> surrogate_from_json(const nlohmann::json& j) {
  const auto kind = j.value("kind", "");
  if (kind == "peds") return PedsModel::from_json(j);
  if (kind == "nn_only") return MlpSurrogate::from_json(j);
  if (kind == "low_fidelity") return std::make_unique<LowFidelityBaseline>(parse_family(j.at("family").get<std::string>()));
  throw ValidationError("unknown surrogate kind '" + kind + "'");
}

MaterialGrid DownsampleCache::get(const GeometryParams& p, int resolution) {
  const auto features = p.features();
  std::string key(sizeof(int) + features.size() * sizeof(double), '\0');
  std::memcpy(key.data(), &resolution, sizeof(int));
  std::memcpy(key.data() + sizeof(int), features.data(), features.size() * sizeof(double));
  {
    std::lock_guard lock(mutex_);
    if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  }
  auto grid = rasterize(p, resolution);
  std::lock_guard lock(mutex_);
  if (entries_.size() < capacity_) entries_.emplace(std::move(key), grid);
  return grid;
}

std::size_t DownsampleCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

// ---------------------------------------------------------------------------

PedsModel::PedsModel(Family family, const NetworkOptions& options, std::uint64_t seed, double initial_w)
    : family_(family), cache_(std::make_shared<DownsampleCache>()) {
  const auto& info = family_info(family);
  lf_resolution_ = info.lf_resolution;
  const auto [nx, ny] = grid_shape(family, lf_resolution_);
  projection_ = default_projection(family);
  OutputActivation bounded;
  bounded.kind = OutputKind::BoundedSigmoid;
  bounded.lo = projection_.clamp_lo;
  bounded.hi = projection_.clamp_hi;
  generator_ = MlpLayout(layer_sizes(input_dim(family), options.generator_hidden, nx * ny), bounded);
  sigma_ = make_sigma_layout(family, options);
  params_.assign(generator_.param_count() + sigma_.param_count() + 1, 0.0);
  Rng rng(seed);
  init_params(generator_, std::span<double>(params_).first(generator_.param_count()), rng);
  init_params(sigma_, std::span<double>(params_).subspan(generator_.param_count(), sigma_.param_count()), rng);
  set_w(initial_w);
}

std::unique_ptr<Surrogate> PedsModel::clone() const { return std::unique_ptr<PedsModel>(new PedsModel(*this)); }

double PedsModel::w() const { return sigmoid(params_.back()); }

void PedsModel::set_w(double w) {
  if (!(w >= 0.0 && w <= 1.0)) throw ValidationError("w must lie in [0, 1]");
  params_.back() = std::log(w) - std::log1p(-w);
}

std::span<const double> PedsModel::generator_params() const {
  return std::span<const double>(params_).first(generator_.param_count());
}

std::span<const double> PedsModel::sigma_params() const {
  return std::span<const double>(params_).subspan(generator_.param_count(), sigma_.param_count());
}

void PedsModel::check_family(const GeometryParams& p) const {
  if (p.family != family_) {
    throw ValidationError("model is " + std::string(family_name(family_)) + ", input is " +
                          std::string(family_name(p.family)));
  }
}

MaterialGrid PedsModel::downsample(const GeometryParams& p) const { return cache_->get(p, lf_resolution_); }

Prediction PedsModel::forward(const GeometryParams& p, PedsTape& tape) const {
  check_family(p);
  const auto x = p.features();
  tape.downsampled = downsample(p);
  tape.generated = tape.downsampled;
  const auto& gen = peds::forward(generator_, generator_params(), x, tape.generator);
  std::copy(gen.begin(), gen.end(), tape.generated.values.begin());
  tape.mixed = mix(tape.generated, tape.downsampled, w());
  try {
    tape.property = evaluate_low_fidelity(project(tape.mixed, projection_), p);
  } catch (const SolverError& e) {
    throw SolverError(std::string("PEDS low-fidelity layer (") + std::string(family_name(family_)) + "): " + e.what());
  }
  tape.prediction.mean = tape.property.value;
  tape.prediction.sigma = peds::forward(sigma_, sigma_params(), x, tape.sigma)[0];
  return tape.prediction;
}

Prediction PedsModel::predict(const GeometryParams& p) const {
  PedsTape tape;
  return forward(p, tape);
}

void PedsModel::backward(const PedsTape& tape, std::span<const double> cot_pred, double cot_sigma,
                         std::span<double> grad) const {
  if (grad.size() != params_.size()) throw ValidationError("gradient span does not match PEDS parameters");
  const bool any = std::any_of(cot_pred.begin(), cot_pred.end(), [](double c) { return c != 0.0; });
  if (any) {
    const auto d_projected = low_fidelity_vjp(tape.property, cot_pred);
    const auto d_mixed = project_vjp(tape.mixed, projection_, d_projected);
    const double w = this->w();
    std::vector<double> d_gen(d_mixed.size());
    double d_w = 0.0;
    for (std::size_t k = 0; k < d_mixed.size(); ++k) {
      d_gen[k] = w * d_mixed[k];
      d_w += (tape.generated.values[k] - tape.downsampled.values[k]) * d_mixed[k];
    }
    peds::backward(generator_, generator_params(), tape.generator, d_gen, grad.first(generator_.param_count()));
    grad[w_index()] += d_w * w * (1.0 - w);
  }
  if (cot_sigma != 0.0) {
    const double c[1] = {cot_sigma};
    peds::backward(sigma_, sigma_params(), tape.sigma, c, grad.subspan(generator_.param_count(), sigma_.param_count()));
  }
}

PedsGradients PedsModel::gradients(const GeometryParams& p, std::span<const double> cot_pred, double cot_sigma) const {
  PedsTape tape;
  forward(p, tape);
  std::vector<double> grad(params_.size(), 0.0);
  backward(tape, cot_pred, cot_sigma, grad);
  PedsGradients out;
  out.generator.assign(grad.begin(), grad.begin() + static_cast<std::ptrdiff_t>(generator_.param_count()));
  out.sigma_net.assign(grad.begin() + static_cast<std::ptrdiff_t>(generator_.param_count()), grad.end() - 1);
  out.w_logit = grad.back();
  // d/dw directly, valid also where the logit chain factor vanishes.
  if (std::any_of(cot_pred.begin(), cot_pred.end(), [](double c) { return c != 0.0; })) {
    const auto d_mixed = project_vjp(tape.mixed, projection_, low_fidelity_vjp(tape.property, cot_pred));
    for (std::size_t k = 0; k < d_mixed.size(); ++k) {
      out.w += (tape.generated.values[k] - tape.downsampled.values[k]) * d_mixed[k];
    }
  }
  return out;
}

double PedsModel::accumulate_gradient(const TrainingSample& sample, const LossConfig& loss,
                                      std::span<double> grad) const {
  PedsTape tape;
  const auto pred = forward(sample.params, tape);
  const auto sl = sample_loss(loss, pred.mean, pred.sigma, sample.target);
  backward(tape, sl.d_pred, sl.d_sigma, grad);
  return sl.value;
}

nlohmann::json PedsModel::to_json() const {
  nlohmann::json j{{"format", "peds-checkpoint"},
                   {"version", kCheckpointVersion},
                   {"kind", "peds"},
                   {"family", family_name(family_)},
                   {"lf_resolution", lf_resolution_},
                   {"generator", net_json(generator_, generator_params())},
                   {"sigma_net", net_json(sigma_, sigma_params())},
                   {"w", w()},
                   {"projection",
                    {{"mirror_x", projection_.mirror_x},
                     {"clamp_lo", projection_.clamp_lo},
                     {"clamp_hi", projection_.clamp_hi}}}};
  if (std::isfinite(params_.back())) {
    j["w_logit"] = params_.back();
  } else {
    j["w_logit"] = nullptr;
  }
  return j;
}

std::unique_ptr<PedsModel> PedsModel::from_json(const nlohmann::json& j) {
  check_header(j, "peds");
  std::unique_ptr<PedsModel> m(new PedsModel());
  m->family_ = parse_family(j.at("family").get<std::string>());
  m->lf_resolution_ = j.at("lf_resolution").get<int>();
  m->cache_ = std::make_shared<DownsampleCache>();
  m->generator_ = j.at("generator").at("layout").get<MlpLayout>();
  m->sigma_ = j.at("sigma_net").at("layout").get<MlpLayout>();
  const auto [nx, ny] = grid_shape(m->family_, m->lf_resolution_);
  if (m->generator_.output_size() != nx * ny) throw ValidationError("generator output does not match lf grid");
  if (m->generator_.input_size() != input_dim(m->family_)) throw ValidationError("generator input size mismatch");
  const auto& pj = j.at("projection");
  m->projection_ = {pj.at("mirror_x").get<bool>(), pj.at("clamp_lo").get<double>(), pj.at("clamp_hi").get<double>()};
  if (!(m->projection_.clamp_lo < m->projection_.clamp_hi)) throw ValidationError("projection needs clamp_lo < clamp_hi");
  m->params_ = read_params(j.at("generator"), m->generator_);
  const auto sig = read_params(j.at("sigma_net"), m->sigma_);
  m->params_.insert(m->params_.end(), sig.begin(), sig.end());
  m->params_.push_back(0.0);
  if (j.contains("w_logit") && !j["w_logit"].is_null()) {
    m->params_.back() = j["w_logit"].get<double>();
  } else {
    m->set_w(j.at("w").get<double>());
  }
  return m;
}

// ---------------------------------------------------------------------------

MlpSurrogate::MlpSurrogate(Family family, const NetworkOptions& options, std::uint64_t seed) : family_(family) {
  const auto& info = family_info(family);
  const auto [nx, ny] = grid_shape(family, info.lf_resolution);
  auto hidden = options.generator_hidden;
  hidden.push_back(nx * ny);
  net_ = MlpLayout(layer_sizes(input_dim(family), hidden, info.target_dim), OutputActivation{});
  sigma_ = make_sigma_layout(family, options);
  params_.assign(net_.param_count() + sigma_.param_count(), 0.0);
  Rng rng(seed);
  init_params(net_, std::span<double>(params_).first(net_.param_count()), rng);
  init_params(sigma_, std::span<double>(params_).subspan(net_.param_count()), rng);
}

std::unique_ptr<Surrogate> MlpSurrogate::clone() const { return std::unique_ptr<MlpSurrogate>(new MlpSurrogate(*this)); }

Prediction MlpSurrogate::predict(const GeometryParams& p) const {
  if (p.family != family_) throw ValidationError("NN-only model used with a different family");
  const auto x = p.features();
  const std::span<const double> all(params_);
  Prediction out;
  out.mean = forward(net_, all.first(net_.param_count()), x);
  out.sigma = forward(sigma_, all.subspan(net_.param_count()), x)[0];
  return out;
}

double MlpSurrogate::accumulate_gradient(const TrainingSample& sample, const LossConfig& loss,
                                         std::span<double> grad) const {
  if (sample.params.family != family_) throw ValidationError("NN-only model used with a different family");
  if (grad.size() != params_.size()) throw ValidationError("gradient span does not match NN-only parameters");
  const auto x = sample.params.features();
  const std::span<const double> all(params_);
  MlpTape net_tape, sigma_tape;
  const auto mean = forward(net_, all.first(net_.param_count()), x, net_tape);
  const double sigma = forward(sigma_, all.subspan(net_.param_count()), x, sigma_tape)[0];
  const auto sl = sample_loss(loss, mean, sigma, sample.target);
  backward(net_, all.first(net_.param_count()), net_tape, sl.d_pred, grad.first(net_.param_count()));
  if (sl.d_sigma != 0.0) {
    const double c[1] = {sl.d_sigma};
    backward(sigma_, all.subspan(net_.param_count()), sigma_tape, c, grad.subspan(net_.param_count()));
  }
  return sl.value;
}

nlohmann::json MlpSurrogate::to_json() const {
  const std::span<const double> all(params_);
  return {{"format", "peds-checkpoint"},
          {"version", kCheckpointVersion},
          {"kind", "nn_only"},
          {"family", family_name(family_)},
          {"net", net_json(net_, all.first(net_.param_count()))},
          {"sigma_net", net_json(sigma_, all.subspan(net_.param_count()))}};
}

std::unique_ptr<MlpSurrogate> MlpSurrogate::from_json(const nlohmann::json& j) {
  check_header(j, "nn_only");
  std::unique_ptr<MlpSurrogate> m(new MlpSurrogate());
  m->family_ = parse_family(j.at("family").get<std::string>());
  m->net_ = j.at("net").at("layout").get<MlpLayout>();
  m->sigma_ = j.at("sigma_net").at("layout").get<MlpLayout>();
  if (m->net_.input_size() != input_dim(m->family_) || m->net_.output_size() != family_info(m->family_).target_dim) {
    throw ValidationError("NN-only checkpoint does not match its family");
  }
  m->params_ = read_params(j.at("net"), m->net_);
  const auto sig = read_params(j.at("sigma_net"), m->sigma_);
  m->params_.insert(m->params_.end(), sig.begin(), sig.end());
  return m;
}

// ---------------------------------------------------------------------------

Prediction LowFidelityBaseline::predict(const GeometryParams& p) const {
  if (p.family != family_) throw ValidationError("low-fidelity baseline used with a different family");
  return {low_fidelity_baseline(p), 1.0};
}

double LowFidelityBaseline::accumulate_gradient(const TrainingSample& sample, const LossConfig& loss,
                                                std::span<double>) const {
  const auto pred = predict(sample.params);
  return sample_loss(loss, pred.mean, pred.sigma, sample.target).value;
}

nlohmann::json LowFidelityBaseline::to_json() const {
  return {{"format", "peds-checkpoint"},
          {"version", kCheckpointVersion},
          {"kind", "low_fidelity"},
          {"family", family_name(family_)}};
}

// ---------------------------------------------------------------------------

double EnsemblePrediction::total_variance() const {
  double s = 0.0;
  for (double v : variance) s += v;
  return s;
}

Ensemble::Ensemble(std::vector<std::unique_ptr<Surrogate>> members) : members_(std::move(members)) {}

Ensemble::Ensemble(const Ensemble& other) {
  for (const auto& m : other.members_) members_.push_back(m->clone());
}

Ensemble& Ensemble::operator=(const Ensemble& other) {
  if (this != &other) {
    Ensemble copy(other);
    members_ = std::move(copy.members_);
  }
  return *this;
}

nlohmann::json Ensemble::to_json() const {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : members_) members.push_back(m->to_json());
  return {{"format", "peds-ensemble"}, {"version", kCheckpointVersion}, {"members", members}};
}

Ensemble Ensemble::from_json(const nlohmann::json& j) {
  if (j.value("format", "") == "peds-checkpoint") {
    Ensemble single;
    single.add(surrogate_from_json(j));
    return single;
  }
  if (j.value("format", "") != "peds-ensemble") throw ValidationError("not a peds ensemble");
  Ensemble e;
  for (const auto& m : j.at("members")) e.add(surrogate_from_json(m));
  if (e.empty()) throw ValidationError("ensemble checkpoint has no members");
  return e;
}

EnsemblePrediction aggregate_predictions(std::span<const Prediction> members) {
  if (members.empty()) throw ValidationError("ensemble has no members");
  const std::size_t dim = members.front().mean.size();
  const double n = static_cast<double>(members.size());
  EnsemblePrediction out;
  out.mean.assign(dim, 0.0);
  out.variance.assign(dim, 0.0);
  for (const auto& m : members) {
    if (m.mean.size() != dim) throw ValidationError("ensemble members disagree on output size");
    for (std::size_t c = 0; c < dim; ++c) out.mean[c] += m.mean[c] / n;
  }
  // mean(sigma^2 + mu^2) - mean(mu)^2, evaluated as mean(sigma^2) + mean((mu - mean)^2).
  for (const auto& m : members) {
    for (std::size_t c = 0; c < dim; ++c) {
      const double d = m.mean[c] - out.mean[c];
      out.variance[c] += (m.sigma * m.sigma + d * d) / n;
    }
  }
  return out;
}

EnsemblePrediction ensemble_predict(const Ensemble& e, const GeometryParams& p) {
  if (e.empty()) throw ValidationError("ensemble has no members");
  std::vector<Prediction> preds;
  preds.reserve(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) preds.push_back(e.member(i).predict(p));
  return aggregate_predictions(preds);
}

InclusionReport count_inclusion(std::span<const TrainingSample> samples, std::vector<double> lo,
                                std::vector<double> hi) {
  InclusionReport r;
  r.lf_min = std::move(lo);
  r.lf_max = std::move(hi);
  for (const auto& s : samples) {
    ++r.total;
    bool in = s.target.size() == r.lf_min.size();
    for (std::size_t c = 0; in && c < s.target.size(); ++c) {
      in = s.target[c] >= r.lf_min[c] && s.target[c] <= r.lf_max[c];
    }
    if (in) ++r.inside;
  }
  return r;
}

InclusionReport check_inclusion(Family family, std::span<const TrainingSample> samples, int random_probes,
                                std::uint64_t seed) {
  const auto& info = family_info(family);
  const auto [nx, ny] = grid_shape(family, info.lf_resolution);
  GeometryParams probe_params;
  probe_params.family = family;
  probe_params.widths.assign(static_cast<std::size_t>(info.hole_count), 0.0);
  const auto reference = rasterize(probe_params, info.lf_resolution);
  const double lo_value = std::min(info.hole_value, info.medium_value);
  const double hi_value = std::max(info.hole_value, info.medium_value);

  std::vector<MaterialGrid> probes;
  MaterialGrid grid = reference;
  std::fill(grid.values.begin(), grid.values.end(), info.medium_value);
  probes.push_back(grid);
  std::fill(grid.values.begin(), grid.values.end(), info.hole_value);
  probes.push_back(grid);
  Rng rng(seed);
  for (int k = 0; k < random_probes; ++k) {
    for (double& v : grid.values) v = uniform(rng, lo_value, hi_value);
    probes.push_back(grid);
    for (double& v : grid.values) v = uniform01(rng) < 0.5 ? lo_value : hi_value;
    probes.push_back(grid);
  }

  std::vector<double> lo(static_cast<std::size_t>(info.target_dim), std::numeric_limits<double>::infinity());
  std::vector<double> hi(static_cast<std::size_t>(info.target_dim), -std::numeric_limits<double>::infinity());
  const int frequencies = std::max(1, info.frequency_count);
  for (const auto& g : probes) {
    for (int f = 0; f < frequencies; ++f) {
      if (info.frequency_count > 0) probe_params.freq_index = f;
      const auto value = evaluate_low_fidelity(g, probe_params).value;
      for (std::size_t c = 0; c < value.size(); ++c) {
        lo[c] = std::min(lo[c], value[c]);
        hi[c] = std::max(hi[c], value[c]);
      }
    }
  }
  auto report = count_inclusion(samples, std::move(lo), std::move(hi));
  report.probes = probes.size();
  (void)nx;
  (void)ny;
  return report;
}

}  // namespace peds
