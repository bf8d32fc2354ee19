#include <benchmark/benchmark.h>

#include <vector>

#include "hywu/kernels.hpp"
#include "hywu/rng.hpp"

// Serial reference vs OpenMP kernels on the matmul shapes the training loop
// actually hits (small batched products) plus a larger square case.

namespace {

void bench_matmul(benchmark::State& state, bool parallel) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  hywu::Rng rng(42);
  auto a = rng.gaussian_vector(n * n);
  auto b = rng.gaussian_vector(n * n);
  std::vector<double> c(n * n, 0.0);
  for (auto _ : state) {
    if (parallel)
      hywu::kernels::openmp::matmul(a.data(), b.data(), c.data(), n, n, n);
    else
      hywu::kernels::serial::matmul(a.data(), b.data(), c.data(), n, n, n);
    benchmark::DoNotOptimize(c.data());
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}

void matmul_serial(benchmark::State& state) { bench_matmul(state, false); }
void matmul_openmp(benchmark::State& state) { bench_matmul(state, true); }

}  // namespace

BENCHMARK(matmul_serial)->Arg(32)->Arg(128)->Arg(512);
BENCHMARK(matmul_openmp)->Arg(32)->Arg(128)->Arg(512);

BENCHMARK_MAIN();
