#include <doctest.h>

#include <random>
#include <vector>

#include "dh/kernels.hpp"

using namespace dh;

namespace {

std::vector<double> randn(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::vector<double> v(n);
    for (auto& x : v) x = g(rng);
    return v;
}

}  // namespace

TEST_SUITE("kernels") {
    TEST_CASE("reductions agree with the serial reference bit for bit") {
        auto a = randn(100003, 1), b = randn(100003, 2);
        for (int t : {1, 2, 4}) {
            kernels::set_threads(t);
            CHECK(kernels::sum(a.data(), a.size()) == kernels::sum_serial(a.data(), a.size()));
            CHECK(kernels::dot(a.data(), b.data(), a.size()) == kernels::dot_serial(a.data(), b.data(), a.size()));
        }
        kernels::set_threads(1);
    }

    TEST_CASE("pointwise matrix application") {
        const int d = 2;
        const std::size_t n = 5000;
        std::vector<std::vector<double>> M(4), x(2), y1(2, std::vector<double>(n)), y2(2, std::vector<double>(n));
        for (int k = 0; k < 4; ++k) M[static_cast<std::size_t>(k)] = randn(n, 10 + static_cast<std::uint64_t>(k));
        for (int k = 0; k < 2; ++k) x[static_cast<std::size_t>(k)] = randn(n, 20 + static_cast<std::uint64_t>(k));
        const double* Mp[4] = {M[0].data(), M[1].data(), M[2].data(), M[3].data()};
        const double* xp[2] = {x[0].data(), x[1].data()};
        double* y1p[2] = {y1[0].data(), y1[1].data()};
        double* y2p[2] = {y2[0].data(), y2[1].data()};
        kernels::apply_matrix_serial(d, n, Mp, xp, y1p);
        kernels::set_threads(3);
        kernels::apply_matrix(d, n, Mp, xp, y2p);
        kernels::set_threads(1);
        CHECK(y1 == y2);
        CHECK(y1[1][7] == doctest::Approx(M[2][7] * x[0][7] + M[3][7] * x[1][7]));
    }

    TEST_CASE("pairwise distance sum") {
        std::vector<double> X{0, 0, 3, 4};
        std::vector<double> Y{0, 0};
        CHECK(kernels::pairwise_distance_sum_serial(X.data(), 2, Y.data(), 1, 2) == doctest::Approx(5.0));
        auto A = randn(300, 5), B = randn(400, 6);
        kernels::set_threads(4);
        const double p = kernels::pairwise_distance_sum(A.data(), 100, B.data(), 133, 3);
        kernels::set_threads(1);
        CHECK(p == doctest::Approx(kernels::pairwise_distance_sum_serial(A.data(), 100, B.data(), 133, 3)).epsilon(1e-13));
    }
}
