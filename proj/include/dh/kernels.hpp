#pragma once

#include <cstddef>

namespace dh::kernels {

/// Threads used by the OpenMP kernels (default: OpenMP's own default).
void set_threads(int n);
int threads();

/// y_i = sum_j M[i*d+j] * x_j at every node. Serial reference.
void apply_matrix_serial(int d, std::size_t n, const double* const* M, const double* const* x,
                         double* const* y);
void apply_matrix(int d, std::size_t n, const double* const* M, const double* const* x,
                  double* const* y);

/// Sums accumulate in fixed-size blocks combined serially, so results do not
/// depend on the thread count.
double sum_serial(const double* a, std::size_t n);
double sum(const double* a, std::size_t n);
double dot_serial(const double* a, const double* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);

/// sum_{i,j} |X_i - Y_j| for row-major samples of dimension p.
double pairwise_distance_sum_serial(const double* X, std::size_t nx, const double* Y, std::size_t ny,
                                    int p);
double pairwise_distance_sum(const double* X, std::size_t nx, const double* Y, std::size_t ny, int p);

}  // namespace dh::kernels
