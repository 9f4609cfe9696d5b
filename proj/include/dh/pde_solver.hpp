#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dh/environment.hpp"
#include "dh/path_clt.hpp"

namespace dh {

/// Periodic simulation box [0, L_sim)^d with m_x points per side.
struct SimDomain {
    int d = 2;
    int m_x = 128;
    double L_sim = 1.0;

    void validate() const;
    double h() const { return L_sim / m_x; }
    std::size_t size() const;
    /// Coordinates of node `idx` (row-major).
    void node(std::size_t idx, double* x) const;
    bool operator==(const SimDomain&) const = default;
};

/// Samples space-time torus fields at ((x - shift)/eps, t/eps^2) on the simulation grid.
/// When the box holds a whole power-of-two number of points per rescaled period the
/// fields are taken as trigonometric interpolants (shifts are exact phase factors);
/// otherwise periodic multilinear interpolation is used. Time is linear between slices.
class TorusSampler {
public:
    TorusSampler(const SpaceTimeGrid& grid, double eps, const SimDomain& dom, std::vector<Field> comps);
    ~TorusSampler();
    TorusSampler(TorusSampler&&) noexcept;
    TorusSampler(const TorusSampler&) = delete;
    TorusSampler& operator=(const TorusSampler&) = delete;

    void sample(double t, std::span<const double> shift, std::vector<Field>& out) const;
    bool spectral() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Components a + s (or a - s) in row-major order.
TorusSampler coefficient_sampler(const EnvironmentRealization& env, double eps, const SimDomain& dom, bool transpose);

using SourceFn = std::function<double(std::span<const double> x, double t)>;

struct CauchyData {
    SimDomain domain;
    double T = 0.05;
    Field g;
    /// Empty means f = 0.
    SourceFn f;
};

/// Initial-data presets: gaussian-bump, two-bumps, indicator-mollified.
struct DataPreset {
    std::string name = "gaussian-bump";
    double amplitude = 1.0;
    double width = 0.05;
    double radius = 0.15;
    /// Empty means the box centre.
    std::vector<double> center;
    /// Amplitude of a steady Gaussian source at the same centre (0 disables it).
    double source_amplitude = 0.0;
};

Field preset_field(const SimDomain& dom, const DataPreset& p);
CauchyData make_cauchy_data(const SimDomain& dom, double T, const DataPreset& p);

/// Smooth bump exp(-|x-c|^2/(2 w^2)) with periodic minimal-image distance.
Field gaussian_bump(const SimDomain& dom, std::span<const double> center, double width, double amplitude = 1.0);

enum class Formulation { direct, transported, limit };
std::string to_string(Formulation f);

struct SolveOptions {
    double dt = 1e-4;
    /// Snapshots at T*k/n_snapshots, k = 0..n_snapshots.
    int n_snapshots = 10;
    /// Transported and limit runs: return fields in the physical frame.
    bool unshift = true;
};

struct SolutionField {
    Formulation formulation = Formulation::direct;
    SimDomain domain;
    std::string frame = "physical";
    std::vector<double> times;
    std::vector<Field> rho;

    double max_l2_sq = 0.0;
    double grad_sq_integral = 0.0;
    double linf = 0.0;
    double g_linf = 0.0;
    double f_linf = 0.0;
    double mass_initial = 0.0;
    double mass_final = 0.0;
    /// max_t |rho|^2 + int int |grad rho|^2 against c (|g|^2 + |f|^2).
    double energy_lhs = 0.0;
    double energy_rhs = 0.0;
    double energy_constant = 0.0;
    bool energy_ok = false;
    /// Share of int |rho(T)| in the outer 5% layer of the box.
    double boundary_mass_fraction = 0.0;
    int steps = 0;
    double mu = 0.0;
    std::vector<std::string> warnings;

    const Field& final() const { return rho.back(); }
};

/// d_t rho = div((a^eps + s^eps) grad rho) + eps^-1 bbar^eps . grad rho + f.
SolutionField solve_epsilon_pde(const EnvironmentRealization& env, double eps, const CauchyData& data,
                                const SolveOptions& opts);
inline SolutionField solve_epsilon_pde(const EnvironmentRealization& env, double eps, const CauchyData& data, double dt) {
    SolveOptions o;
    o.dt = dt;
    return solve_epsilon_pde(env, eps, data, o);
}

/// Same problem in the frame moving with w^eps: rho~(y,t) = rho(y - w(t), t), coefficients
/// evaluated at y - w(t) and no eps^-1 term. `w` must come from integrate_path of the torus drift.
SolutionField solve_transported_pde(const EnvironmentRealization& env, double eps, const CauchyData& data,
                                    const DriftPath& w, const SolveOptions& opts);
/// Builds w^eps from the environment's own drift.
SolutionField solve_transported_pde(const EnvironmentRealization& env, double eps, const CauchyData& data,
                                    const SolveOptions& opts);
DriftPath transport_path(const EnvironmentRealization& env, double eps, double T);

/// d_t rho = div(a_bar grad rho) + Sigma grad rho o dB + f via rho(x,t) = rho~(x + Sigma B_t, t),
/// rho~ solving the constant-coefficient equation with forcing f(y - Sigma B_t, t).
SolutionField solve_limit_spde(const std::vector<double>& a_bar, const std::vector<double>& sigma,
                               const CauchyData& data, std::uint64_t brownian_seed, const SolveOptions& opts);
/// Same reduction with a prescribed shift path in place of Sigma B.
SolutionField solve_limit_coupled(const std::vector<double>& a_bar, const DriftPath& shift, const CauchyData& data,
                                  const SolveOptions& opts);

/// Sigma B on a uniform grid of [0, T] fine enough for every snapshot time.
DriftPath brownian_shift(int d, const std::vector<double>& sigma, double T, double dt, std::uint64_t seed);

/// Backward problem -d_t psi = div((a - s)^eps grad psi) - eps^-1 bbar^eps . grad psi + h, psi(T) = psi_T.
/// Snapshots are returned in increasing physical time.
SolutionField solve_adjoint_pde(const EnvironmentRealization& env, double eps, const SimDomain& dom, double T,
                                const Field& psi_T, const SourceFn& h, const SolveOptions& opts);

/// Exact solution of d_t u = div(A grad u) on the periodic box for a Gaussian bump,
/// summed over periodic images.
Field heat_gaussian(const SimDomain& dom, std::span<const double> center, double width, double amplitude,
                    const std::vector<double>& A, double t);

double integrate(const SimDomain& dom, const Field& u);
double inner(const SimDomain& dom, const Field& u, const Field& v);
double l2_norm(const SimDomain& dom, const Field& u);
/// Trapezoid in time over matching snapshot grids.
double spacetime_l2(const SolutionField& u);
double spacetime_l2_difference(const SolutionField& u, const SolutionField& v);

/// Translate a field: out(x) = u(x + shift), exact for band-limited data.
Field spectral_shift(const SimDomain& dom, const Field& u, std::span<const double> shift);

}  // namespace dh
