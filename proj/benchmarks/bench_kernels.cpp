// Microbenchmarks for the hot kernels: per-operation rounding, sparse
// products, the memory-limited factorization, triangular solves, and a full
// preconditioned solve on a synthetic banded least-squares problem.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "icls/fp.hpp"
#include "icls/icfact.hpp"
#include "icls/krylov.hpp"
#include "icls/sparse.hpp"

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

double uniform(std::uint64_t& state) {
    return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

// Banded rectangular matrix with a well-conditioned column structure.
icls::SparseMatrix banded_ls(icls::index_t m, icls::index_t n,
                             icls::index_t band, std::uint64_t seed) {
    std::vector<icls::Triplet> t;
    std::uint64_t state = seed;
    for (icls::index_t j = 0; j < n; ++j) {
        t.push_back({j, j, 2.0 + uniform(state)});
        for (icls::index_t k = 1; k <= band; ++k) {
            if (j + k < m) t.push_back({j + k, j, uniform(state) - 0.5});
        }
    }
    return icls::SparseMatrix::from_triplets(m, n, std::move(t));
}

std::vector<double> random_vector(icls::index_t n, std::uint64_t seed) {
    std::vector<double> v(static_cast<std::size_t>(n));
    std::uint64_t state = seed;
    for (double& x : v) x = 2.0 * uniform(state) - 1.0;
    return v;
}

void BM_RoundToHalf(benchmark::State& state) {
    const std::vector<double> xs = random_vector(4096, 7);
    const icls::FpFormat& f = icls::fp16();
    for (auto _ : state) {
        double acc = 0.0;
        for (double x : xs) acc += icls::round_to(f, x);
        benchmark::DoNotOptimize(acc);
    }
    state.SetItemsProcessed(state.iterations() *
                            static_cast<std::int64_t>(xs.size()));
}

void BM_FmaRounded(benchmark::State& state) {
    const std::vector<double> xs = random_vector(4096, 11);
    const icls::FpFormat& f = icls::fp32();
    for (auto _ : state) {
        double acc = 1.0;
        for (double x : xs) acc = icls::fma_rounded(f, acc, x, 0.5);
        benchmark::DoNotOptimize(acc);
    }
    state.SetItemsProcessed(state.iterations() *
                            static_cast<std::int64_t>(xs.size()));
}

void BM_Matvec(benchmark::State& state) {
    const icls::index_t n = state.range(0);
    const icls::SparseMatrix A = banded_ls(2 * n, n, 8, 3);
    const std::vector<double> x = random_vector(n, 5);
    const icls::FpFormat& f =
        state.range(1) == 16 ? icls::fp16() : icls::fp64();
    for (auto _ : state) {
        std::vector<double> y = icls::matvec(A, x, f);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * A.nnz());
}

void BM_FormNormal(benchmark::State& state) {
    const icls::index_t n = state.range(0);
    const icls::SparseMatrix A = banded_ls(2 * n, n, 8, 3);
    const icls::ScaledProblem sp = icls::scale_columns(A);
    for (auto _ : state) {
        icls::NormalMatrix C = icls::form_normal(sp.B, icls::fp64());
        benchmark::DoNotOptimize(C.C.values.data());
    }
}

void BM_IcMemoryLimited(benchmark::State& state) {
    const icls::index_t n = state.range(0);
    const icls::SparseMatrix A = banded_ls(2 * n, n, 8, 3);
    const icls::ScaledProblem sp = icls::scale_columns(A);
    const icls::NormalMatrix C = icls::form_normal(sp.B, icls::fp64());
    for (auto _ : state) {
        icls::ICFactor F = icls::ic_memory_limited(C, {10, 10}, icls::fp32());
        benchmark::DoNotOptimize(F.L.values.data());
    }
}

void BM_SolveLower(benchmark::State& state) {
    const icls::index_t n = state.range(0);
    const icls::SparseMatrix A = banded_ls(2 * n, n, 8, 3);
    const icls::ScaledProblem sp = icls::scale_columns(A);
    const icls::NormalMatrix C = icls::form_normal(sp.B, icls::fp64());
    const icls::ICFactor F = icls::ic_memory_limited(C, {10, 10}, icls::fp64());
    const std::vector<double> rhs = random_vector(n, 13);
    for (auto _ : state) {
        std::vector<double> y = icls::solve_lower(F.L, rhs, icls::fp64());
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * F.L.nnz());
}

void BM_PreconditionedSolve(benchmark::State& state) {
    const icls::index_t n = state.range(0);
    const icls::SparseMatrix A = banded_ls(2 * n, n, 8, 3);
    const icls::ScaledProblem sp = icls::scale_columns(A);
    const icls::NormalMatrix C = icls::form_normal(sp.B, icls::fp64());
    const icls::ICFactor F = icls::ic_memory_limited(C, {10, 10}, icls::fp64());
    const icls::IcPreconditioner M{F, icls::fp64()};
    const std::vector<double> b = random_vector(2 * n, 17);
    icls::StoppingConfig cfg;
    cfg.delta = 1e-8;
    for (auto _ : state) {
        icls::SolveReport rep =
            icls::lsqr(sp.B, b, M, cfg, {}, icls::fp64());
        benchmark::DoNotOptimize(rep.z.data());
    }
}

}  // namespace

BENCHMARK(BM_RoundToHalf);
BENCHMARK(BM_FmaRounded);
BENCHMARK(BM_Matvec)->Args({1000, 64})->Args({1000, 16});
BENCHMARK(BM_FormNormal)->Arg(1000);
BENCHMARK(BM_IcMemoryLimited)->Arg(500);
BENCHMARK(BM_SolveLower)->Arg(1000);
BENCHMARK(BM_PreconditionedSolve)->Arg(300);

BENCHMARK_MAIN();
