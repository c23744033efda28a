// Serial reference loops against their OpenMP counterparts. Thread count
// follows OMP_NUM_THREADS.

#include "ismaf/kernels.hpp"

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

using namespace ismaf;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1, 1);
    Tensor t(Shape{r, c});
    for (double& v : t.data()) v = u(rng);
    return t;
}

// Ring plus random chords, each node with a self-loop.
kernels::EdgeIndex random_graph(std::size_t n, std::size_t degree, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    kernels::EdgeIndex e;
    e.offsets.push_back(0);
    for (std::size_t i = 0; i < n; ++i) {
        e.sources.push_back(i);
        e.sources.push_back((i + 1) % n);
        for (std::size_t k = 2; k < degree; ++k) e.sources.push_back(pick(rng));
        e.offsets.push_back(e.sources.size());
    }
    return e;
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    const Tensor a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
    for (auto _ : state)
        benchmark::DoNotOptimize(Parallel ? kernels::omp::matmul(a, b) : kernels::serial::matmul(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <bool Parallel>
void BM_CosineNeighbors(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    const Tensor x = random_matrix(n, 32, 3);
    for (auto _ : state)
        benchmark::DoNotOptimize(Parallel ? kernels::omp::cosine_neighbors(x, 0.5, 1e-12)
                                          : kernels::serial::cosine_neighbors(x, 0.5, 1e-12));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n / 2));
}

template <bool Parallel>
void BM_Attention(benchmark::State& state)
{
    const auto batch = static_cast<std::size_t>(state.range(0));
    const std::size_t tokens = 6, width = 56, heads = 8;
    const Tensor q = random_matrix(batch * tokens, width, 4), k = random_matrix(batch * tokens, width, 5),
                 v = random_matrix(batch * tokens, width, 6);
    const double scale = 1.0 / std::sqrt(static_cast<double>(width / heads));
    std::vector<double> probs;
    for (auto _ : state)
        benchmark::DoNotOptimize(Parallel ? kernels::omp::attention(q, k, v, batch, heads, scale, &probs)
                                          : kernels::serial::attention(q, k, v, batch, heads, scale, &probs));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}

template <bool Parallel>
void BM_GatAggregate(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    const std::size_t heads = 8, width = 8 * 38;
    const auto edges = random_graph(n, 8, 7);
    const Tensor hp = random_matrix(n, width, 8), attn = random_matrix(heads, 2 * width / heads, 9);
    kernels::GatAttention cache;
    for (auto _ : state)
        benchmark::DoNotOptimize(Parallel ? kernels::omp::gat_aggregate(hp, attn, edges, heads, 0.2, &cache)
                                          : kernels::serial::gat_aggregate(hp, attn, edges, heads, 0.2, &cache));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(edges.edge_count()));
}

} // namespace

BENCHMARK(BM_Matmul<false>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Matmul<true>)->Name("matmul/omp")->Arg(64)->Arg(256);
BENCHMARK(BM_CosineNeighbors<false>)->Name("cosine_neighbors/serial")->Arg(1000)->Arg(4000);
BENCHMARK(BM_CosineNeighbors<true>)->Name("cosine_neighbors/omp")->Arg(1000)->Arg(4000);
BENCHMARK(BM_Attention<false>)->Name("attention/serial")->Arg(64)->Arg(512);
BENCHMARK(BM_Attention<true>)->Name("attention/omp")->Arg(64)->Arg(512);
BENCHMARK(BM_GatAggregate<false>)->Name("gat_aggregate/serial")->Arg(2000)->Arg(8000);
BENCHMARK(BM_GatAggregate<true>)->Name("gat_aggregate/omp")->Arg(2000)->Arg(8000);

BENCHMARK_MAIN();
