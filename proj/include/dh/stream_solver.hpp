#pragma once

#include <string>
#include <vector>

#include "dh/grid.hpp"

namespace dh {

struct StreamRecovery {
    MatrixField s_rec;
    /// max |div s_rec - (b - spatial mean of b)|
    double residual = 0.0;
    /// residual / max |b|
    double relative_residual = 0.0;
    double alpha = 0.0;
    std::vector<std::string> warnings;
};

/// Max of the discrete divergence relative to the largest single term |D_j b_j|.
double relative_divergence(const VectorField& b, const SpaceTimeGrid& grid);

/// Solves -Lap S_jk = D_j b_k - D_k b_j slice by slice with zero spatial mean.
/// In d = 3 the result is the Coulomb-gauge representative.
StreamRecovery solve_stream_matrix(const VectorField& b, const SpaceTimeGrid& grid);

/// (alpha - Lap) S_jk = D_j b_k - D_k b_j, alpha in (0, 1).
StreamRecovery solve_stream_regularized(const VectorField& b, const SpaceTimeGrid& grid, double alpha);

/// Row divergence (div S)_i = sum_j D_j S_ij.
VectorField stream_divergence(const MatrixField& s, const SpaceTimeGrid& grid);

}  // namespace dh
