// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <exception>
#include <span>
#include <vector>

#include "peds/loss.hpp"
#include "peds/model.hpp"

namespace peds {

// Samples per reduction chunk. Fixed so that the summation order, and hence
// the result bits, do not depend on the thread count.
inline constexpr std::size_t kReductionChunk = 8;

struct BatchGradient {
  double loss = 0.0;          // mean sample loss
  std::vector<double> grad;   // mean gradient
};

// Mean loss and gradient over data[indices]. Each chunk of kReductionChunk
// samples is accumulated in order; chunk partials are then summed in chunk
// order. The serial and OpenMP versions produce identical bits.
BatchGradient batch_gradient_serial(const Surrogate& model, std::span<const TrainingSample> data,
                                    std::span<const std::size_t> indices, const LossConfig& loss);
BatchGradient batch_gradient_parallel(const Surrogate& model, std::span<const TrainingSample> data,
                                      std::span<const std::size_t> indices, const LossConfig& loss);

// Mean loss only (no gradient).
double mean_loss(const Surrogate& model, std::span<const TrainingSample> data, const LossConfig& loss,
                 bool parallel = true);

// Number of threads OpenMP will use for the kernels above.
int worker_count();

// out[i] = fn(i) for i in [0, n), evaluated with a dynamic OpenMP schedule.
// The first exception thrown by any call is rethrown after the loop.
template <typename R, typename Fn>
std::vector<R> parallel_map(std::size_t n, Fn&& fn, bool parallel = true) {
  std::vector<R> out(n);
  std::exception_ptr error;
  const long count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (long i = 0; i < count; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(peds_parallel_map_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace peds
