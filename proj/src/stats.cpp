#include "dh/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dh/errors.hpp"
#include "dh/kernels.hpp"
#include "dh/rng.hpp"

namespace dh {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double kolmogorov_pvalue(std::size_t n, double D) {
    const double sn = std::sqrt(static_cast<double>(n));
    const double lam = (sn + 0.12 + 0.11 / sn) * D;
    if (lam < 0.2) return 1.0;
    double p = 0.0;
    for (int k = 1; k <= 100; ++k) {
        double term = std::exp(-2.0 * k * k * lam * lam);
        p += (k % 2 == 1 ? 2.0 : -2.0) * term;
        if (term < 1e-16) break;
    }
    return std::clamp(p, 0.0, 1.0);
}

double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double D = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        double F = cdf(sample[i]);
        D = std::max({D, (static_cast<double>(i) + 1.0) / n - F, F - static_cast<double>(i) / n});
    }
    return D;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

double correlation_pvalue(double r, std::size_t n) {
    if (n < 4) return 1.0;
    r = std::clamp(r, -0.999999999, 0.999999999);
    double z = std::atanh(r) * std::sqrt(static_cast<double>(n) - 3.0);
    return std::erfc(std::abs(z) / std::sqrt(2.0));
}

double energy_distance(const std::vector<double>& a, const std::vector<double>& b, int p) {
    if (p <= 0 || a.empty() || b.empty()) throw DimensionMismatch("energy distance: empty sample");
    if (a.size() % static_cast<std::size_t>(p) != 0 || b.size() % static_cast<std::size_t>(p) != 0)
        throw DimensionMismatch("energy distance: sample sizes are not multiples of the dimension");
    const std::size_t na = a.size() / static_cast<std::size_t>(p), nb = b.size() / static_cast<std::size_t>(p);
    const double ab = kernels::pairwise_distance_sum(a.data(), na, b.data(), nb, p) / static_cast<double>(na * nb);
    const double aa = kernels::pairwise_distance_sum(a.data(), na, a.data(), na, p) / static_cast<double>(na * na);
    const double bb = kernels::pairwise_distance_sum(b.data(), nb, b.data(), nb, p) / static_cast<double>(nb * nb);
    return ab - 0.5 * (aa + bb);
}

PermutationResult energy_permutation_test(const std::vector<double>& a, const std::vector<double>& b, int p,
                                          int permutations, std::uint64_t seed, double level) {
    PermutationResult res;
    res.statistic = energy_distance(a, b, p);
    const std::size_t na = a.size() / static_cast<std::size_t>(p), nb = b.size() / static_cast<std::size_t>(p);
    const std::size_t n = na + nb;
    std::vector<double> pooled(a);
    pooled.insert(pooled.end(), b.begin(), b.end());
    // Pairwise distances of the pooled sample, computed once.
    std::vector<double> dist(n * n);
    const long nn = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic, 16) num_threads(kernels::threads())
    for (long i = 0; i < nn; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double r2 = 0.0;
            for (int k = 0; k < p; ++k) {
                double t = pooled[static_cast<std::size_t>(i) * static_cast<std::size_t>(p) + static_cast<std::size_t>(k)] -
                           pooled[j * static_cast<std::size_t>(p) + static_cast<std::size_t>(k)];
                r2 += t * t;
            }
            dist[static_cast<std::size_t>(i) * n + j] = std::sqrt(r2);
        }
    auto stat = [&](const std::vector<std::size_t>& perm) {
        double ab = 0.0, aa = 0.0, bb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = dist.data() + perm[i] * n;
            const bool ia = i < na;
            for (std::size_t j = 0; j < n; ++j) {
                double v = row[perm[j]];
                const bool ja = j < na;
                if (ia && ja) aa += v;
                else if (!ia && !ja) bb += v;
                else ab += v;
            }
        }
        ab *= 0.5;
        return ab / static_cast<double>(na * nb) -
               0.5 * (aa / static_cast<double>(na * na) + bb / static_cast<double>(nb * nb));
    };
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng = make_rng(seed, "permutation");
    std::vector<double> null;
    int exceed = 0;
    for (int k = 0; k < permutations; ++k) {
        std::shuffle(perm.begin(), perm.end(), rng);
        double s = stat(perm);
        null.push_back(s);
        if (s >= res.statistic - 1e-15 * std::abs(res.statistic)) ++exceed;
    }
    res.p_value = (1.0 + exceed) / (1.0 + permutations);
    std::sort(null.begin(), null.end());
    if (!null.empty()) {
        std::size_t idx = static_cast<std::size_t>(std::ceil((1.0 - level) * static_cast<double>(null.size()))) - 1;
        res.threshold = null[std::min(idx, null.size() - 1)];
    }
    return res;
}

}  // namespace dh
