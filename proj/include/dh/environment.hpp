#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dh/fft.hpp"
#include "dh/grid.hpp"

namespace dh {

struct SpectralParams {
    double ell_x = 0.2;
    double ell_t = 0.2;
    double beta_decay = 3.0;
    double sigma_s = 0.5;
    double sigma_a = 0.2;
    double lambda = 1.0;
    double Lambda = 2.0;

    /// Throws ValidationError; d enters through the ellipticity-by-construction bound.
    void validate(int d) const;
    bool operator==(const SpectralParams&) const = default;
};

enum class BbarModel { zero, periodic, ou, rw_interp };

BbarModel parse_bbar_model(const std::string& name);
std::string to_string(BbarModel m);

/// Spatially homogeneous drift model. amplitude is the stationary standard
/// deviation (ou), the sine amplitude (periodic) or the step size (rw-interp).
struct BbarSpec {
    BbarModel model = BbarModel::zero;
    double amplitude = 1.0;
    double period = 1.0;
    double tau = 0.5;

    void validate() const;
    bool operator==(const BbarSpec&) const = default;
};

/// d-vector time series stored as cell averages: entry n covers [n*dt, (n+1)*dt).
struct TemporalSeries {
    int d = 0;
    double dt = 1.0;
    std::vector<double> values;

    std::size_t cells() const { return d > 0 ? values.size() / static_cast<std::size_t>(d) : 0; }
    double horizon() const { return dt * static_cast<double>(cells()); }
    double at(std::size_t n, int i) const { return values[n * static_cast<std::size_t>(d) + static_cast<std::size_t>(i)]; }
    /// Exact integral of component i over [0, t].
    double integral(int i, double t) const;
};

/// Long (non-periodic) realization of a drift model on [0, horizon].
TemporalSeries bbar_series(const BbarSpec& spec, int d, double horizon, double dt, std::uint64_t seed);

/// Closed-form long-run covariance of the block integrals (d*d, row-major).
std::vector<double> analytic_sigma_sq(const BbarSpec& spec, int d);

struct EnvironmentRealization {
    SpaceTimeGrid grid;
    SpectralParams params;
    BbarSpec bbar_spec;
    MatrixField a;
    MatrixField s;
    /// n_t rows of d entries; node n sits at t = n*k.
    std::vector<double> bbar;
    std::uint64_t seed = 0;

    double bbar_at(int n, int i) const {
        return bbar[static_cast<std::size_t>(n) * static_cast<std::size_t>(grid.d) + static_cast<std::size_t>(i)];
    }
};

Field sample_gaussian_field(const SpaceTimeGrid& grid, const SpectralParams& params, std::uint64_t seed,
                            const std::string& channel_tag, double amplitude = 1.0);

EnvironmentRealization build_environment(const SpaceTimeGrid& grid, const SpectralParams& params,
                                         std::uint64_t seed, const BbarSpec& bbar);

/// a = lambda*I, s = 0, bbar = 0.
EnvironmentRealization trivial_environment(const SpaceTimeGrid& grid, double lambda);

/// a(x) = alpha(x_1) I, s = 0, bbar = 0.
EnvironmentRealization laminate_environment(const SpaceTimeGrid& grid, const std::function<double(double)>& alpha);

/// Periodic extension of the torus drift, sampled at the torus step.
TemporalSeries torus_bbar_series(const EnvironmentRealization& env, double horizon);

/// Checks ellipticity at every node; throws EllipticityViolation.
void audit_ellipticity(const EnvironmentRealization& env);

VectorField drift_of(const EnvironmentRealization& env);

/// Spectral operators applied slice by slice to fields laid out as n_slices
/// contiguous blocks of fft.real_size() values.
VectorField spectral_gradient(const SpatialFFT& fft, std::size_t n_slices, const Field& u);
Field spectral_divergence(const SpatialFFT& fft, std::size_t n_slices, const VectorField& v);

enum class Coefficient { a, s, bbar };

/// Periodic multilinear interpolation at (x/eps mod L, t/eps^2 mod T_env).
std::vector<double> eval_rescaled(const EnvironmentRealization& env, double eps, std::span<const double> x,
                                  double t, Coefficient which);

/// Eigenvalues of a small symmetric matrix, ascending.
std::vector<double> sym_eigenvalues(int d, const double* m);

}  // namespace dh
