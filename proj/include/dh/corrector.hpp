#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dh/environment.hpp"
#include "dh/gmres.hpp"

namespace dh {

struct CorrectorProblem {
    const EnvironmentRealization* env = nullptr;
    std::vector<double> direction;
    double delta = 1e-4;
    bool transpose = false;
};

/// Discrete corrector on the space-time torus. Forward problem:
///   delta*phi + D_t phi - div((a+s)(grad phi + xi)) - bbar . grad phi = 0,
/// with D_t the centered periodic difference. The transpose problem is the
/// exact matrix transpose: -D_t, (a - s) and +bbar . grad.
struct CorrectorField {
    Field phi;
    VectorField grad_phi;
    /// (a+s)(grad phi + xi), or (a-s)(grad phi + xi) for the transpose problem.
    VectorField flux;
    double residual_norm = 0.0;
    double delta = 0.0;
    bool transpose = false;
    std::vector<double> direction;
    int iterations = 0;
    std::vector<double> residual_history;
};

CorrectorField solve_corrector(const CorrectorProblem& problem, const GmresOptions& opts);
inline CorrectorField solve_corrector(const CorrectorProblem& problem, double tol = 1e-9) {
    GmresOptions o;
    o.tol = tol;
    return solve_corrector(problem, o);
}

struct EffectiveMatrix {
    int d = 0;
    /// Row-major d x d.
    std::vector<double> a_bar;
    std::vector<double> m_bar;
    double lambda_min = 0.0;
    double upper_cert = 0.0;
    /// max |a_bar - m_bar^T|
    double duality_gap = 0.0;
    double delta = 0.0;
    SpaceTimeGrid grid;
    std::vector<std::uint64_t> seeds;
    /// Final relative residuals of the 2d solves (forward first).
    std::vector<double> residuals;
    std::vector<int> iterations;
    /// Filled by delta_extrapolation: the deltas used and the raw a_bar per delta.
    std::vector<double> delta_sequence;
    std::vector<std::vector<double>> raw_a_bar;
    std::vector<std::vector<double>> raw_m_bar;
    std::vector<std::string> warnings;
};

EffectiveMatrix effective_matrix(const EnvironmentRealization& env, double delta, const GmresOptions& opts);
inline EffectiveMatrix effective_matrix(const EnvironmentRealization& env, double delta, double tol = 1e-9) {
    GmresOptions o;
    o.tol = tol;
    return effective_matrix(env, delta, o);
}

/// |<a grad phi . grad phi> + <F . grad phi>| / (<|grad phi|^2> + |xi|^2),
/// F = (a+s) xi (forward) or (a-s) xi (transpose).
double energy_check(const CorrectorField& cf, const EnvironmentRealization& env, std::span<const double> direction);

struct SublinearityRow {
    double eps = 0.0;
    double value = 0.0;
};

/// For each eps: integral over B_R x [0, R^2] of (eps*phi(y/eps - W(t/eps^2), t/eps^2) - mean)^2,
/// W the running integral of the torus drift. The factor eps in front of phi is
/// the eps^2 normalization of the squared corrector; values are raw integrals.
std::vector<SublinearityRow> sublinearity_diagnostic(const CorrectorField& cf, const EnvironmentRealization& env,
                                                     const std::vector<double>& eps_list, double R,
                                                     int samples_per_period = 8);
std::vector<SublinearityRow> sublinearity_diagnostic(const EnvironmentRealization& env,
                                                     std::span<const double> direction,
                                                     const std::vector<double>& eps_list, double R,
                                                     double delta = 1e-4, bool transpose = false);

/// Polynomial (Richardson/Neville) extrapolation of a_bar and m_bar to delta = 0.
EffectiveMatrix delta_extrapolation(const EnvironmentRealization& env, const std::vector<double>& delta_list,
                                    const GmresOptions& opts);
inline EffectiveMatrix delta_extrapolation(const EnvironmentRealization& env, const std::vector<double>& delta_list,
                                           double tol = 1e-9) {
    GmresOptions o;
    o.tol = tol;
    return delta_extrapolation(env, delta_list, o);
}

/// Value at 0 of the interpolating polynomial through (x_i, y_i).
double extrapolate_to_zero(const std::vector<double>& x, const std::vector<double>& y);

/// Running integral W(t_n) of the torus drift by the trapezoid rule; periodic because bbar has zero mean.
std::vector<double> drift_primitive(const EnvironmentRealization& env);

}  // namespace dh
