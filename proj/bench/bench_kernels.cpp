// Times the serial reference kernel against the OpenMP kernel on random
// batches and checks that both produce the same loss and gradients.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "asap/kernels.hpp"
#include "fixtures.hpp"

namespace {

using namespace asap;
using Clock = std::chrono::steady_clock;

double max_abs_diff(const ModelParameters& a, const ModelParameters& b) {
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  double worst = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    worst = std::max(worst, (*ta[i].tensor - *tb[i].tensor).cwiseAbs().maxCoeff());
  }
  return worst;
}

struct Timing {
  double best_ms = 0.0;
  double loss = 0.0;
  ModelParameters grads;
};

Timing time_kernel(BatchKernel& kernel, const std::vector<const TrainingExample*>& batch,
                   const ModelParameters& params, const EncoderConfig& config, int aspects,
                   Execution execution, int repeats) {
  Timing t;
  t.best_ms = 1e300;
  for (int r = 0; r < repeats; ++r) {
    ModelParameters grads = ModelParameters::zeros(config, aspects);
    const auto start = Clock::now();
    const BatchOutput out = kernel.run(batch, params, {{}, false, execution}, &grads);
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    if (ms < t.best_ms) {
      t.best_ms = ms;
      t.loss = out.loss.total;
      t.grads = std::move(grads);
    }
  }
  return t;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Serial vs parallel batch kernel timing");
  int batch_size = 32, length = 128, hidden = 64, layers = 2, heads = 4, ffn = 256, repeats = 3;
  int aspects = 18;
  std::vector<int> threads;
  bool quick = false;
  app.add_option("--batch", batch_size);
  app.add_option("--len", length);
  app.add_option("--hidden", hidden);
  app.add_option("--layers", layers);
  app.add_option("--heads", heads);
  app.add_option("--ffn", ffn);
  app.add_option("--repeats", repeats);
  app.add_option("--threads", threads, "Thread counts to try (default: 1 and the OpenMP max)")
      ->delimiter(',');
  app.add_flag("--quick", quick, "Tiny shapes, one repeat; used as a smoke test");
  CLI11_PARSE(app, argc, argv);

  if (quick) {
    batch_size = 4, length = 12, hidden = 16, layers = 1, heads = 2, ffn = 32, repeats = 1;
  }
  int max_threads = 1;
#ifdef _OPENMP
  max_threads = omp_get_max_threads();
#endif
  if (threads.empty()) {
    threads.push_back(1);
    if (max_threads > 1) threads.push_back(max_threads);
  }

  EncoderConfig config;
  config.hidden = hidden;
  config.layers = layers;
  config.heads = heads;
  config.ffn_hidden = ffn;
  config.vocab_size = 500;
  config.max_len = length;
  config.init_seed = 1;

  Rng rng(42);
  const ModelParameters params = fixtures::random_parameters(rng, config, aspects, 0.1);
  const auto examples =
      fixtures::random_examples(rng, batch_size, aspects, config.vocab_size, length / 2, length);
  std::vector<const TrainingExample*> batch;
  for (const auto& e : examples) batch.push_back(&e);

  BatchKernel kernel(config, aspects);
  std::printf("batch=%d len=%d hidden=%d layers=%d heads=%d ffn=%d repeats=%d\n", batch_size, length,
              hidden, layers, heads, ffn, repeats);

  const Timing serial =
      time_kernel(kernel, batch, params, config, aspects, Execution::Serial, repeats);
  std::printf("%-10s %8s %10.2f ms\n", "serial", "-", serial.best_ms);

  bool agree = true;
  for (int n : threads) {
#ifdef _OPENMP
    omp_set_num_threads(n);
#endif
    const Timing par =
        time_kernel(kernel, batch, params, config, aspects, Execution::Parallel, repeats);
    const double loss_diff = std::fabs(par.loss - serial.loss);
    const double grad_diff = max_abs_diff(par.grads, serial.grads);
    const bool ok = loss_diff <= 1e-10 * std::max(1.0, std::fabs(serial.loss)) && grad_diff <= 1e-9;
    agree = agree && ok;
    std::printf("%-10s %8d %10.2f ms  speedup %.2fx  |dloss| %.1e  |dgrad| %.1e  %s\n", "parallel", n,
                par.best_ms, serial.best_ms / par.best_ms, loss_diff, grad_diff, ok ? "ok" : "MISMATCH");
  }
  return agree ? 0 : 1;
}
