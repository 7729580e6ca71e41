// OpenMP kernels against their serial references.

#include <benchmark/benchmark.h>

#include "pex/kernels.hpp"
#include "pex/random.hpp"

namespace {

pex::Matrix random(std::size_t r, std::size_t c, std::uint64_t seed) {
  pex::Rng rng(seed);
  pex::Matrix m(r, c);
  for (double& v : m.storage()) v = pex::standard_normal(rng);
  return m;
}

template <void (*Gemm)(const pex::Matrix&, const pex::Matrix&, pex::Matrix&, bool)>
void BM_gemm_nt(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const pex::Matrix a = random(n, n, 1), b = random(n, n, 2);
  pex::Matrix out(n, n);
  for (auto _ : state) {
    Gemm(a, b, out, false);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <void (*Softmax)(pex::Matrix&, std::span<const unsigned char>)>
void BM_softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const pex::Matrix src = random(n, n, 3);
  for (auto _ : state) {
    pex::Matrix m = src;
    Softmax(m, {});
    benchmark::DoNotOptimize(m.data());
  }
}

}  // namespace

BENCHMARK(BM_gemm_nt<pex::kernels::gemm_nt>)->Name("gemm_nt/omp")->RangeMultiplier(2)->Range(16, 256);
BENCHMARK(BM_gemm_nt<pex::kernels::reference::gemm_nt>)->Name("gemm_nt/serial")->RangeMultiplier(2)->Range(16, 256);
BENCHMARK(BM_softmax<pex::kernels::softmax_rows>)->Name("softmax_rows/omp")->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_softmax<pex::kernels::reference::softmax_rows>)->Name("softmax_rows/serial")->RangeMultiplier(4)->Range(16, 256);

BENCHMARK_MAIN();
