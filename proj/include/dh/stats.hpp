#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace dh {

double normal_cdf(double x);

/// Asymptotic Kolmogorov p-value with Stephens' small-sample correction.
double kolmogorov_pvalue(std::size_t n, double D);

/// One-sample KS statistic of `sample` against `cdf` (sample is copied and sorted).
double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf);

/// Two-sided p-value for zero correlation, Fisher z approximation.
double correlation_pvalue(double r, std::size_t n);

double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Energy distance E|X-Y| - (E|X-X'| + E|Y-Y'|)/2 between row-major samples of dimension p.
double energy_distance(const std::vector<double>& a, const std::vector<double>& b, int p);

struct PermutationResult {
    double statistic = 0.0;
    double p_value = 1.0;
    /// (1 - level) quantile of the permutation distribution.
    double threshold = 0.0;
};

/// Permutation test of equal laws based on the energy distance.
PermutationResult energy_permutation_test(const std::vector<double>& a, const std::vector<double>& b, int p,
                                          int permutations, std::uint64_t seed, double level = 0.05);

}  // namespace dh
