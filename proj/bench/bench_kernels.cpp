// Serial reference kernels against their OpenMP counterparts on stage-sized inputs.

#include <benchmark/benchmark.h>

#include <vector>

#include "gdvig/kernels.hpp"
#include "gdvig/rng.hpp"

namespace k = gdvig::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  gdvig::Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1, 1);
  return v;
}

template <auto Gemm>
void BM_Gemm(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Gemm(false, false, n, n, n, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <auto Conv>
void BM_ConvForward(benchmark::State& state) {
  k::ConvGeometry g;
  g.batch = 8;
  g.in_ch = g.out_ch = static_cast<std::size_t>(state.range(0));
  g.in_h = g.in_w = static_cast<std::size_t>(state.range(1));
  const auto x = random_vec(g.batch * g.in_ch * g.in_h * g.in_w, 3);
  const auto w = random_vec(g.out_ch * g.in_ch * 9, 4);
  std::vector<double> out(g.batch * g.out_ch * g.out_h() * g.out_w());
  for (auto _ : state) {
    Conv(g, x, w, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Knn>
void BM_Knn(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0)), channels = 48, kk = 9;
  const auto f = random_vec(n * channels, 5);
  auto gaze = random_vec(n, 6);
  for (double& v : gaze) v = 0.5 + 0.5 * v;
  std::vector<std::size_t> nb(n * kk);
  for (auto _ : state) {
    Knn(f, n, channels, gaze, 3.0, kk, nb);
    benchmark::DoNotOptimize(nb.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<k::serial::gemm>)->Name("gemm/serial")->Arg(64)->Arg(192);
BENCHMARK(BM_Gemm<k::omp::gemm>)->Name("gemm/omp")->Arg(64)->Arg(192);
BENCHMARK(BM_ConvForward<k::serial::conv2d_forward>)->Name("conv3x3/serial")->Args({16, 32})->Args({48, 56});
BENCHMARK(BM_ConvForward<k::omp::conv2d_forward>)->Name("conv3x3/omp")->Args({16, 32})->Args({48, 56});
BENCHMARK(BM_Knn<k::serial::knn_select>)->Name("knn/serial")->Arg(196)->Arg(784);
BENCHMARK(BM_Knn<k::omp::knn_select>)->Name("knn/omp")->Arg(196)->Arg(784);
BENCHMARK_MAIN();
