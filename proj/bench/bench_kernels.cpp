#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dh/kernels.hpp"

namespace {

std::vector<double> randn(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::vector<double> v(n);
    for (auto& x : v) x = g(rng);
    return v;
}

void BM_dot_serial(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    auto a = randn(n, 1), b = randn(n, 2);
    for (auto _ : st) benchmark::DoNotOptimize(dh::kernels::dot_serial(a.data(), b.data(), n));
}

void BM_dot_omp(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    auto a = randn(n, 1), b = randn(n, 2);
    for (auto _ : st) benchmark::DoNotOptimize(dh::kernels::dot(a.data(), b.data(), n));
}

template <bool Omp>
void BM_apply_matrix(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    std::vector<std::vector<double>> M, x, y(2, std::vector<double>(n));
    for (int k = 0; k < 4; ++k) M.push_back(randn(n, 10 + static_cast<std::uint64_t>(k)));
    for (int k = 0; k < 2; ++k) x.push_back(randn(n, 20 + static_cast<std::uint64_t>(k)));
    const double* Mp[4] = {M[0].data(), M[1].data(), M[2].data(), M[3].data()};
    const double* xp[2] = {x[0].data(), x[1].data()};
    double* yp[2] = {y[0].data(), y[1].data()};
    for (auto _ : st) {
        if constexpr (Omp)
            dh::kernels::apply_matrix(2, n, Mp, xp, yp);
        else
            dh::kernels::apply_matrix_serial(2, n, Mp, xp, yp);
        benchmark::ClobberMemory();
    }
}

template <bool Omp>
void BM_pairwise(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    auto X = randn(n * 5, 3), Y = randn(n * 5, 4);
    for (auto _ : st) {
        if constexpr (Omp)
            benchmark::DoNotOptimize(dh::kernels::pairwise_distance_sum(X.data(), n, Y.data(), n, 5));
        else
            benchmark::DoNotOptimize(dh::kernels::pairwise_distance_sum_serial(X.data(), n, Y.data(), n, 5));
    }
}

}  // namespace

BENCHMARK(BM_dot_serial)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_dot_omp)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_apply_matrix<false>)->Arg(1 << 20);
BENCHMARK(BM_apply_matrix<true>)->Arg(1 << 20);
BENCHMARK(BM_pairwise<false>)->Arg(1000);
BENCHMARK(BM_pairwise<true>)->Arg(1000);

BENCHMARK_MAIN();
