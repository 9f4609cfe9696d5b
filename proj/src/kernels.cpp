#include "dh/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace dh::kernels {

namespace {

constexpr std::size_t kBlock = 4096;
int g_threads = 0;

double block_sum(const double* a, std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += a[i];
    return s;
}

double block_dot(const double* a, const double* b, std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += a[i] * b[i];
    return s;
}

double row_distance_sum(const double* x, const double* Y, std::size_t ny, int p) {
    double s = 0.0;
    for (std::size_t j = 0; j < ny; ++j) {
        const double* y = Y + j * static_cast<std::size_t>(p);
        double r2 = 0.0;
        for (int k = 0; k < p; ++k) {
            double t = x[k] - y[k];
            r2 += t * t;
        }
        s += std::sqrt(r2);
    }
    return s;
}

}  // namespace

void set_threads(int n) { g_threads = std::max(0, n); }
int threads() { return g_threads > 0 ? g_threads : omp_get_max_threads(); }

void apply_matrix_serial(int d, std::size_t n, const double* const* M, const double* const* x,
                         double* const* y) {
    for (std::size_t p = 0; p < n; ++p) {
        for (int i = 0; i < d; ++i) {
            double acc = 0.0;
            for (int j = 0; j < d; ++j) acc += M[i * d + j][p] * x[j][p];
            y[i][p] = acc;
        }
    }
}

void apply_matrix(int d, std::size_t n, const double* const* M, const double* const* x,
                  double* const* y) {
    const long nn = static_cast<long>(n);
#pragma omp parallel for schedule(static) num_threads(threads())
    for (long p = 0; p < nn; ++p) {
        for (int i = 0; i < d; ++i) {
            double acc = 0.0;
            for (int j = 0; j < d; ++j) acc += M[i * d + j][p] * x[j][p];
            y[i][p] = acc;
        }
    }
}

double sum_serial(const double* a, std::size_t n) {
    double total = 0.0;
    for (std::size_t lo = 0; lo < n; lo += kBlock) total += block_sum(a, lo, std::min(n, lo + kBlock));
    return total;
}

double sum(const double* a, std::size_t n) {
    const long nb = static_cast<long>((n + kBlock - 1) / kBlock);
    std::vector<double> part(static_cast<std::size_t>(nb));
#pragma omp parallel for schedule(static) num_threads(threads())
    for (long b = 0; b < nb; ++b) {
        std::size_t lo = static_cast<std::size_t>(b) * kBlock;
        part[static_cast<std::size_t>(b)] = block_sum(a, lo, std::min(n, lo + kBlock));
    }
    double total = 0.0;
    for (double v : part) total += v;
    return total;
}

double dot_serial(const double* a, const double* b, std::size_t n) {
    double total = 0.0;
    for (std::size_t lo = 0; lo < n; lo += kBlock) total += block_dot(a, b, lo, std::min(n, lo + kBlock));
    return total;
}

double dot(const double* a, const double* b, std::size_t n) {
    const long nb = static_cast<long>((n + kBlock - 1) / kBlock);
    std::vector<double> part(static_cast<std::size_t>(nb));
#pragma omp parallel for schedule(static) num_threads(threads())
    for (long k = 0; k < nb; ++k) {
        std::size_t lo = static_cast<std::size_t>(k) * kBlock;
        part[static_cast<std::size_t>(k)] = block_dot(a, b, lo, std::min(n, lo + kBlock));
    }
    double total = 0.0;
    for (double v : part) total += v;
    return total;
}

double pairwise_distance_sum_serial(const double* X, std::size_t nx, const double* Y, std::size_t ny,
                                    int p) {
    double total = 0.0;
    for (std::size_t i = 0; i < nx; ++i) total += row_distance_sum(X + i * static_cast<std::size_t>(p), Y, ny, p);
    return total;
}

double pairwise_distance_sum(const double* X, std::size_t nx, const double* Y, std::size_t ny, int p) {
    std::vector<double> rows(nx);
    const long n = static_cast<long>(nx);
#pragma omp parallel for schedule(dynamic, 8) num_threads(threads())
    for (long i = 0; i < n; ++i)
        rows[static_cast<std::size_t>(i)] = row_distance_sum(X + static_cast<std::size_t>(i) * static_cast<std::size_t>(p), Y, ny, p);
    double total = 0.0;
    for (double v : rows) total += v;
    return total;
}

}  // namespace dh::kernels
