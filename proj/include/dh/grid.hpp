#pragma once

#include <cstddef>
#include <vector>

namespace dh {

using Field = std::vector<double>;
/// d components, each a Field over the same nodes.
using VectorField = std::vector<Field>;

/// d*d components stored row-major: component (i,j) lives at index i*d + j.
struct MatrixField {
    int d = 0;
    std::vector<Field> c;

    MatrixField() = default;
    MatrixField(int dim, std::size_t n) : d(dim), c(static_cast<std::size_t>(dim * dim), Field(n, 0.0)) {}
    Field& at(int i, int j) { return c[static_cast<std::size_t>(i * d + j)]; }
    const Field& at(int i, int j) const { return c[static_cast<std::size_t>(i * d + j)]; }
    std::size_t nodes() const { return c.empty() ? 0 : c.front().size(); }
};

/// Periodic space-time lattice. Storage is time-major, then spatial row-major,
/// so each time slice is a contiguous block of spatial_size() values.
struct SpaceTimeGrid {
    int d = 2;
    int n_x = 32;
    int n_t = 16;
    double L = 1.0;
    double T_env = 1.0;

    void validate() const;
    std::size_t spatial_size() const;
    std::size_t size() const { return spatial_size() * static_cast<std::size_t>(n_t); }
    double h() const { return L / n_x; }
    double k() const { return T_env / n_t; }
    /// Linear index of a node; every coordinate wraps periodically.
    std::size_t index(long t, const long* x) const;
    bool operator==(const SpaceTimeGrid&) const = default;
};

bool is_power_of_two(long n);

/// Signed Fourier index for position m of an n-point transform.
inline long signed_mode(long m, long n) { return m <= n / 2 ? m : m - n; }

}  // namespace dh
