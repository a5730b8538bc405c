// Serial reference kernels versus the OpenMP kernels at d = 64.
// Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include "ega/ega.hpp"
#include "ega/reference.hpp"
#include "ega/rng.hpp"

namespace {

using namespace ega;

constexpr std::size_t kDim = 64;

EmbeddingBatch unit_batch(std::size_t rows, std::uint64_t seed) {
  Xorshift64Star rng(seed);
  Matrix m(rows, kDim);
  for (double& v : m.values()) v = rng.normal();
  for (std::size_t i = 0; i < rows; ++i) {
    auto r = m.row(i);
    const double n = norm2(r);
    for (double& v : r) v /= n;
  }
  return EmbeddingBatch(std::move(m));
}

struct Inputs {
  explicit Inputs(std::size_t b) : queries(unit_batch(b, 1)), targets(unit_batch(b, 2)) {}
  EmbeddingBatch queries;
  EmbeddingBatch targets;
};

template <auto Similarity>
void BM_Similarity(benchmark::State& state) {
  const Inputs in(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(Similarity(in.queries, in.targets, kDefaultTau));
}

template <auto Similarity, auto Softmax, auto Hardness, auto Amplify>
void BM_Amplify(benchmark::State& state) {
  const Inputs in(static_cast<std::size_t>(state.range(0)));
  const auto s = Similarity(in.queries, in.targets, kDefaultTau);
  const auto p = Softmax(s);
  for (auto _ : state) {
    benchmark::DoNotOptimize(Amplify(p, Hardness(s, kDefaultAlpha, HardnessMode::relative)));
  }
}

template <auto Pipeline>
void BM_Pipeline(benchmark::State& state) {
  const Inputs in(static_cast<std::size_t>(state.range(0)));
  const EgaConfig config;
  for (auto _ : state) benchmark::DoNotOptimize(Pipeline(in.queries, in.targets, config));
}

#define EGA_SIZES ->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond)

BENCHMARK(BM_Similarity<reference::similarity_matrix>)->Name("similarity/serial") EGA_SIZES;
BENCHMARK(BM_Similarity<ega::similarity_matrix>)->Name("similarity/openmp") EGA_SIZES;
BENCHMARK(BM_Amplify<reference::similarity_matrix, reference::softmax_probs,
                     reference::hardness_matrix, reference::amplify_probs>)
    ->Name("amplify/serial") EGA_SIZES;
BENCHMARK(BM_Amplify<ega::similarity_matrix, ega::softmax_probs, ega::hardness_matrix,
                     ega::amplify_probs>)
    ->Name("amplify/openmp") EGA_SIZES;
BENCHMARK(BM_Pipeline<reference::ega_pipeline>)->Name("pipeline/serial") EGA_SIZES;
BENCHMARK(BM_Pipeline<ega::ega_pipeline>)->Name("pipeline/openmp") EGA_SIZES;

}  // namespace

BENCHMARK_MAIN();
