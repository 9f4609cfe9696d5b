#include "dh/grid.hpp"

#include <cmath>
#include <string>

#include "dh/errors.hpp"

namespace dh {

bool is_power_of_two(long n) { return n > 0 && (n & (n - 1)) == 0; }

void SpaceTimeGrid::validate() const {
    if (d != 2 && d != 3) throw ValidationError("grid: d must be 2 or 3, got " + std::to_string(d));
    if (n_x < 4 || !is_power_of_two(n_x))
        throw ValidationError("grid: n_x must be a power of two >= 4, got " + std::to_string(n_x));
    if (n_t < 4 || !is_power_of_two(n_t))
        throw ValidationError("grid: n_t must be a power of two >= 4, got " + std::to_string(n_t));
    if (!(L > 0.0) || !std::isfinite(L)) throw ValidationError("grid: L must be positive");
    if (!(T_env > 0.0) || !std::isfinite(T_env)) throw ValidationError("grid: T_env must be positive");
}

std::size_t SpaceTimeGrid::spatial_size() const {
    std::size_t n = 1;
    for (int i = 0; i < d; ++i) n *= static_cast<std::size_t>(n_x);
    return n;
}

std::size_t SpaceTimeGrid::index(long t, const long* x) const {
    auto wrap = [](long v, long n) { return ((v % n) + n) % n; };
    std::size_t idx = static_cast<std::size_t>(wrap(t, n_t));
    for (int i = 0; i < d; ++i) idx = idx * static_cast<std::size_t>(n_x) + static_cast<std::size_t>(wrap(x[i], n_x));
    return idx;
}

}  // namespace dh
