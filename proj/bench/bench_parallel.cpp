// SPDX-License-Identifier: Apache-2.0

// Serial reference kernels against their OpenMP versions: minibatch gradient
// accumulation and high-fidelity data generation. Prints one JSON object.

#include <chrono>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>
#include <json.hpp>

#include "peds/harness.hpp"
#include "peds/parallel.hpp"

using namespace peds;

namespace {

template <typename Fn>
double best_seconds(int repeats, Fn&& fn) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Serial vs OpenMP kernel benchmark"};
  std::string family_arg = "fourier16";
  int batch = 64;
  int gen_points = 32;
  int resolution = 0;
  int repeats = 3;
  app.add_option("--family", family_arg, "geometry family");
  app.add_option("--batch", batch, "samples per gradient batch")->check(CLI::PositiveNumber);
  app.add_option("--gen-points", gen_points, "points for the data-generation benchmark")->check(CLI::PositiveNumber);
  app.add_option("--resolution", resolution, "high-fidelity resolution (0: family default)");
  app.add_option("--repeats", repeats, "timing repeats (best is reported)")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  try {
    const Family family = parse_family(family_arg);

    // Cheap targets are enough for timing the gradient kernels.
    Rng rng(1);
    std::vector<TrainingSample> data;
    for (int i = 0; i < batch; ++i) {
      auto p = sample_params(family, rng);
      data.push_back({p, low_fidelity_baseline(p)});
    }
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const PedsModel model(family, NetworkOptions{}, 3);
    const auto loss = default_train_config(family).loss;

    BatchGradient serial, parallel;
    const double t_serial = best_seconds(repeats, [&] { serial = batch_gradient_serial(model, data, idx, loss); });
    const double t_parallel =
        best_seconds(repeats, [&] { parallel = batch_gradient_parallel(model, data, idx, loss); });

    GenDataConfig gen{family, gen_points, resolution, 5, "bench"};
    Dataset d_serial, d_parallel;
    gen.parallel = false;
    const double g_serial = best_seconds(1, [&] { d_serial = gen_data(gen); });
    gen.parallel = true;
    const double g_parallel = best_seconds(1, [&] { d_parallel = gen_data(gen); });
    bool same_data = d_serial.samples.size() == d_parallel.samples.size();
    for (std::size_t i = 0; same_data && i < d_serial.samples.size(); ++i) {
      same_data = d_serial.samples[i].target == d_parallel.samples[i].target;
    }

    const nlohmann::json out{
        {"family", family_name(family)},
        {"threads", worker_count()},
        {"batch_gradient",
         {{"batch", batch},
          {"serial_seconds", t_serial},
          {"parallel_seconds", t_parallel},
          {"speedup", t_serial / t_parallel},
          {"bitwise_equal", serial.loss == parallel.loss && serial.grad == parallel.grad}}},
        {"gen_data",
         {{"points", gen_points},
          {"serial_seconds", g_serial},
          {"parallel_seconds", g_parallel},
          {"speedup", g_serial / g_parallel},
          {"bitwise_equal", same_data}}}};
    std::cout << out.dump(2) << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
