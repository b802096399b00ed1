// SPDX-License-Identifier: Apache-2.0

#include "peds/parallel.hpp"

#include <algorithm>

#include <omp.h>

#include "peds/error.hpp"

namespace peds {
namespace {

struct Partial {
  double loss = 0.0;
  std::vector<double> grad;
};

Partial chunk_gradient(const Surrogate& model, std::span<const TrainingSample> data,
                       std::span<const std::size_t> indices, std::size_t chunk, const LossConfig& loss) {
  Partial p;
  p.grad.assign(model.parameters().size(), 0.0);
  const std::size_t begin = chunk * kReductionChunk;
  const std::size_t end = std::min(indices.size(), begin + kReductionChunk);
  for (std::size_t i = begin; i < end; ++i) {
    if (indices[i] >= data.size()) throw ValidationError("batch index out of range");
    p.loss += model.accumulate_gradient(data[indices[i]], loss, p.grad);
  }
  return p;
}

BatchGradient reduce(std::vector<Partial>& partials, std::size_t parameter_count, std::size_t samples) {
  BatchGradient out;
  out.grad.assign(parameter_count, 0.0);
  for (const auto& p : partials) {
    out.loss += p.loss;
    for (std::size_t k = 0; k < parameter_count; ++k) out.grad[k] += p.grad[k];
  }
  const double scale = 1.0 / static_cast<double>(samples);
  out.loss *= scale;
  for (double& g : out.grad) g *= scale;
  return out;
}

BatchGradient batch_gradient(const Surrogate& model, std::span<const TrainingSample> data,
                             std::span<const std::size_t> indices, const LossConfig& loss, bool parallel) {
  if (indices.empty()) throw ValidationError("empty batch");
  const std::size_t chunks = (indices.size() + kReductionChunk - 1) / kReductionChunk;
  auto partials = parallel_map<Partial>(
      chunks, [&](std::size_t c) { return chunk_gradient(model, data, indices, c, loss); }, parallel);
  return reduce(partials, model.parameters().size(), indices.size());
}

}  // namespace

BatchGradient batch_gradient_serial(const Surrogate& model, std::span<const TrainingSample> data,
                                    std::span<const std::size_t> indices, const LossConfig& loss) {
  return batch_gradient(model, data, indices, loss, false);
}

BatchGradient batch_gradient_parallel(const Surrogate& model, std::span<const TrainingSample> data,
                                      std::span<const std::size_t> indices, const LossConfig& loss) {
  return batch_gradient(model, data, indices, loss, true);
}

double mean_loss(const Surrogate& model, std::span<const TrainingSample> data, const LossConfig& loss,
                 bool parallel) {
  if (data.empty()) throw ValidationError("mean_loss on an empty set");
  const auto values = parallel_map<double>(
      data.size(),
      [&](std::size_t i) {
        const auto pred = model.predict(data[i].params);
        return sample_loss(loss, pred.mean, pred.sigma, data[i].target).value;
      },
      parallel);
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

int worker_count() { return omp_get_max_threads(); }

}  // namespace peds
