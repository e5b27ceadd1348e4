// Times the serial reference kernels against the OpenMP variants, plus one
// federated round with serial vs parallel client training.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "fedvg/kernels.hpp"
#include "fedvg/orchestrator.hpp"
#include "fedvg/rng.hpp"

using namespace fedvg;
namespace chrono = std::chrono;

namespace {

double seconds_since(chrono::steady_clock::time_point t0) {
  return chrono::duration<double>(chrono::steady_clock::now() - t0).count();
}

template <typename F>
double time_best_of(int reps, F&& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = chrono::steady_clock::now();
    fn();
    best = std::min(best, seconds_since(t0));
  }
  return best;
}

void fill(std::vector<double>& v, Rng& rng) {
  for (auto& x : v) x = rng.normal();
}

void bench_dense(int64_t n, int64_t in, int64_t out) {
  Rng rng(7);
  std::vector<double> x(static_cast<size_t>(n * in)), w(static_cast<size_t>(out * in)),
      b(static_cast<size_t>(out)), y_s(static_cast<size_t>(n * out)), y_p(y_s);
  fill(x, rng);
  fill(w, rng);
  fill(b, rng);

  const double ts = time_best_of(5, [&] {
    kernels::serial::dense_forward(x.data(), w.data(), b.data(), y_s.data(), n, in, out);
  });
  const double tp = time_best_of(5, [&] {
    kernels::omp::dense_forward(x.data(), w.data(), b.data(), y_p.data(), n, in, out);
  });
  const bool same = std::memcmp(y_s.data(), y_p.data(), y_s.size() * sizeof(double)) == 0;
  std::printf("dense_forward  %4lldx%lld->%lld   serial %8.3f ms   omp %8.3f ms   x%.2f   bitwise %s\n",
              (long long)n, (long long)in, (long long)out, ts * 1e3, tp * 1e3, ts / tp,
              same ? "equal" : "DIFFER");
}

void bench_conv(int64_t n, int64_t h, int64_t w, int64_t ic, int64_t oc) {
  Rng rng(7);
  const int64_t oh = h - 2, ow = w - 2;
  std::vector<double> x(static_cast<size_t>(n * h * w * ic)),
      k(static_cast<size_t>(oc * ic * 9)), b(static_cast<size_t>(oc)),
      y_s(static_cast<size_t>(n * oh * ow * oc)), y_p(y_s);
  fill(x, rng);
  fill(k, rng);
  fill(b, rng);

  const double ts = time_best_of(3, [&] {
    kernels::serial::conv2d_forward(x.data(), k.data(), b.data(), y_s.data(), n, h, w, ic, oc, 3, 3);
  });
  const double tp = time_best_of(3, [&] {
    kernels::omp::conv2d_forward(x.data(), k.data(), b.data(), y_p.data(), n, h, w, ic, oc, 3, 3);
  });
  const bool same = std::memcmp(y_s.data(), y_p.data(), y_s.size() * sizeof(double)) == 0;
  std::printf("conv2d_forward %4lldx%lldx%lldx%lld->%lld serial %8.3f ms   omp %8.3f ms   x%.2f   bitwise %s\n",
              (long long)n, (long long)h, (long long)w, (long long)ic, (long long)oc, ts * 1e3,
              tp * 1e3, ts / tp, same ? "equal" : "DIFFER");
}

ExperimentConfig round_config() {
  ExperimentConfig c;
  c.data.num_classes = 5;
  c.data.samples_per_class = 400;
  c.data.feature_dim = 16;
  c.model.hidden_dims = {32};
  c.num_clients = 8;
  c.join_ratio = 1.0;
  c.rounds = 3;
  c.local_epochs = 3;
  c.strategy = StrategyKind::FedAvg;
  c.weighting = Weighting::ValidationGrad;
  c.alpha = 1.0;
  c.master_seed = 11;
  return c;
}

void bench_round() {
  const auto config = round_config();
  kernels::set_parallel(false);
  const double ts = time_best_of(2, [&] { run_experiment(config); });
  kernels::set_parallel(true);
  const double tp = time_best_of(2, [&] { run_experiment(config); });
  std::printf("fedvg 3 rounds, 8 clients       serial %8.3f ms   omp %8.3f ms   x%.2f\n",
              ts * 1e3, tp * 1e3, ts / tp);
}

}  // namespace

int main() {
  std::printf("threads: %d\n", kernels::max_threads());
  bench_dense(256, 256, 256);
  bench_dense(1024, 64, 64);
  bench_conv(16, 28, 28, 8, 16);
  bench_conv(64, 12, 12, 1, 8);
  bench_round();
  return 0;
}
