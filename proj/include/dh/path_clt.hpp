#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dh/environment.hpp"

namespace dh {

/// w^eps(t) = eps^-1 * int_0^t bbar(s/eps^2) ds on a uniform grid.
struct DriftPath {
    int d = 0;
    double eps = 1.0;
    std::vector<double> times;
    /// times.size() rows of d entries.
    std::vector<double> values;
    std::uint64_t source_seed = 0;

    double value(std::size_t n, int i) const { return values[n * static_cast<std::size_t>(d) + static_cast<std::size_t>(i)]; }
    /// Linear interpolation in time (exact for the piecewise-linear primitive when the grid resolves the series).
    double at(double t, int i) const;
};

/// The rescaled integrand is piecewise constant, so the quadrature is exact; dt must
/// resolve the compressed series: dt <= eps^2 * bbar.dt.
DriftPath integrate_path(const TemporalSeries& bbar, double eps, double T, double dt);

struct BlockIncrements {
    int d = 0;
    std::size_t count = 0;
    /// count rows of d entries, x_j = int_{j-1}^j bbar.
    std::vector<double> x;
};

BlockIncrements block_increments(const TemporalSeries& bbar, int horizon);

struct CovarianceEstimate {
    int d = 0;
    std::vector<double> sigma_sq;
    std::vector<double> std_error;
    std::string method;
    int truncation = 0;
    /// Variability of the partial lag sums over the upper half of the lag window.
    double tail = 0.0;
    std::vector<std::string> warnings;
};

/// sigma^2(theta) = E[(theta.x_1)^2] + 2 sum_{j=2}^{lag_max} E[(theta.x_1)(theta.x_j)], polarized,
/// with expectations estimated by averaging over paths and over start positions.
CovarianceEstimate estimate_sigma_series(const std::vector<BlockIncrements>& ensemble, int lag_max);

/// Sample covariance of w(T) divided by T.
CovarianceEstimate empirical_sigma(const std::vector<DriftPath>& paths, double T);

struct DonskerReport {
    std::string verdict;
    bool pass = false;
    double level = 0.01;
    std::vector<double> times;
    /// Per marginal time, per component.
    std::vector<std::vector<double>> ks_pvalues;
    /// Per component, per adjacent increment pair.
    std::vector<std::vector<double>> independence_pvalues;
    double min_pvalue = 1.0;
    int tests = 0;
};

/// KS tests of w(t)/sqrt(t) against N(0, sigma_sq_ii) and lag-1 increment correlation tests.
/// The family is judged at `level` with a Bonferroni correction.
DonskerReport donsker_test(const std::vector<DriftPath>& paths, const std::vector<double>& sigma_sq,
                           const std::vector<double>& marginal_times, double level = 0.01);

struct MomentReport {
    double moment = 0.0;
    double moment_std_error = 0.0;
    double max_ratio = 0.0;
    /// max over paths and j in [2^k, 2^{k+1}) of int_{j-1}^j |bbar| / sqrt(j).
    std::vector<double> dyadic_max;
    /// Least-squares slope of log dyadic_max against log 2^k; positive means growth.
    double growth_slope = 0.0;
    bool growth_flag = false;
};

MomentReport moment_check(const std::vector<TemporalSeries>& ensemble, double delta_exp);

}  // namespace dh
