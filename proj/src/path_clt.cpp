#include "dh/path_clt.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "dh/errors.hpp"
#include "dh/stats.hpp"

namespace dh {

namespace {

/// Prefix integrals of each component at cell boundaries.
std::vector<double> prefix_integrals(const TemporalSeries& s) {
    const std::size_t n = s.cells();
    const std::size_t d = static_cast<std::size_t>(s.d);
    std::vector<double> P((n + 1) * d, 0.0);
    for (std::size_t c = 0; c < n; ++c)
        for (std::size_t i = 0; i < d; ++i) P[(c + 1) * d + i] = P[c * d + i] + s.dt * s.values[c * d + i];
    return P;
}

double integral_at(const TemporalSeries& s, const std::vector<double>& P, int i, double u) {
    const std::size_t d = static_cast<std::size_t>(s.d);
    double pos = u / s.dt;
    std::size_t c = static_cast<std::size_t>(std::floor(pos + 1e-12));
    if (c >= s.cells()) return P[s.cells() * d + static_cast<std::size_t>(i)];
    double frac = std::max(0.0, u - static_cast<double>(c) * s.dt);
    return P[c * d + static_cast<std::size_t>(i)] + frac * s.values[c * d + static_cast<std::size_t>(i)];
}

void project_psd(int d, std::vector<double>& m) {
    Eigen::MatrixXd a(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = 0.5 * (m[static_cast<std::size_t>(i * d + j)] + m[static_cast<std::size_t>(j * d + i)]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    Eigen::MatrixXd p = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m[static_cast<std::size_t>(i * d + j)] = 0.5 * (p(i, j) + p(j, i));
}

}  // namespace

double DriftPath::at(double t, int i) const {
    if (times.empty()) return 0.0;
    if (t <= times.front()) return value(0, i);
    if (t >= times.back()) return value(times.size() - 1, i);
    const double dt = times[1] - times[0];
    std::size_t n = static_cast<std::size_t>(std::floor(t / dt));
    n = std::min(n, times.size() - 2);
    double w = (t - times[n]) / (times[n + 1] - times[n]);
    return (1.0 - w) * value(n, i) + w * value(n + 1, i);
}

DriftPath integrate_path(const TemporalSeries& bbar, double eps, double T, double dt) {
    if (!(eps > 0.0)) throw ValidationError("integrate_path: eps must be positive");
    if (!(T > 0.0) || !(dt > 0.0)) throw ValidationError("integrate_path: T and dt must be positive");
    if (dt > eps * eps * bbar.dt * (1.0 + 1e-9))
        throw ResolutionError("integrate_path: dt = " + std::to_string(dt) + " does not resolve eps^2 * sample spacing = " +
                              std::to_string(eps * eps * bbar.dt));
    if (bbar.horizon() < T / (eps * eps) * (1.0 - 1e-12))
        throw ResolutionError("integrate_path: drift series shorter than T / eps^2");
    DriftPath p;
    p.d = bbar.d;
    p.eps = eps;
    const std::size_t steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
    const auto P = prefix_integrals(bbar);
    p.times.resize(steps + 1);
    p.values.assign((steps + 1) * static_cast<std::size_t>(p.d), 0.0);
    for (std::size_t n = 0; n <= steps; ++n) {
        const double t = std::min(T, static_cast<double>(n) * dt);
        p.times[n] = t;
        for (int i = 0; i < p.d; ++i)
            p.values[n * static_cast<std::size_t>(p.d) + static_cast<std::size_t>(i)] = eps * integral_at(bbar, P, i, t / (eps * eps));
    }
    return p;
}

BlockIncrements block_increments(const TemporalSeries& bbar, int horizon) {
    if (horizon < 1) throw ValidationError("block_increments: horizon must be >= 1");
    if (bbar.horizon() < horizon * (1.0 - 1e-12)) throw ResolutionError("block_increments: series shorter than horizon");
    const auto P = prefix_integrals(bbar);
    BlockIncrements b;
    b.d = bbar.d;
    b.count = static_cast<std::size_t>(horizon);
    b.x.resize(b.count * static_cast<std::size_t>(b.d));
    for (std::size_t j = 0; j < b.count; ++j)
        for (int i = 0; i < b.d; ++i)
            b.x[j * static_cast<std::size_t>(b.d) + static_cast<std::size_t>(i)] =
                integral_at(bbar, P, i, static_cast<double>(j + 1)) - integral_at(bbar, P, i, static_cast<double>(j));
    return b;
}

CovarianceEstimate estimate_sigma_series(const std::vector<BlockIncrements>& ensemble, int lag_max) {
    if (ensemble.size() < 100) throw InsufficientSamples("estimate_sigma_series: need at least 100 sequences");
    const int d = ensemble.front().d;
    const std::size_t count = ensemble.front().count;
    if (lag_max < 1 || static_cast<std::size_t>(lag_max) >= count)
        throw ValidationError("estimate_sigma_series: need 1 <= lag_max < block count");
    const std::size_t dd = static_cast<std::size_t>(d * d);
    const std::size_t M = ensemble.size();
    // Per-path partial sums S_K = C_0 + sum_{l=1}^{K-1} (C_l + C_l^T), K = 1..lag_max.
    std::vector<std::vector<double>> partial(static_cast<std::size_t>(lag_max), std::vector<double>(dd, 0.0));
    std::vector<double> per_path(M * dd);
    for (std::size_t p = 0; p < M; ++p) {
        const auto& b = ensemble[p];
        if (b.d != d || b.count != count) throw DimensionMismatch("estimate_sigma_series: ragged ensemble");
        std::vector<double> S(dd, 0.0);
        for (int l = 0; l < lag_max; ++l) {
            std::vector<double> C(dd, 0.0);
            const std::size_t pairs = count - static_cast<std::size_t>(l);
            for (std::size_t j = 0; j < pairs; ++j)
                for (int r = 0; r < d; ++r)
                    for (int c = 0; c < d; ++c)
                        C[static_cast<std::size_t>(r * d + c)] += b.x[j * static_cast<std::size_t>(d) + static_cast<std::size_t>(r)] *
                                                               b.x[(j + static_cast<std::size_t>(l)) * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)];
            for (auto& v : C) v /= static_cast<double>(pairs);
            for (int r = 0; r < d; ++r)
                for (int c = 0; c < d; ++c) {
                    double term = C[static_cast<std::size_t>(r * d + c)];
                    if (l > 0) term += C[static_cast<std::size_t>(c * d + r)];
                    S[static_cast<std::size_t>(r * d + c)] += term;
                }
            for (std::size_t k = 0; k < dd; ++k) partial[static_cast<std::size_t>(l)][k] += S[k] / static_cast<double>(M);
        }
        for (std::size_t k = 0; k < dd; ++k) per_path[p * dd + k] = S[k];
    }
    CovarianceEstimate est;
    est.d = d;
    est.method = "series";
    est.truncation = lag_max;
    est.sigma_sq = partial.back();
    est.std_error.assign(dd, 0.0);
    for (std::size_t k = 0; k < dd; ++k) {
        double var = 0.0;
        for (std::size_t p = 0; p < M; ++p) var += std::pow(per_path[p * dd + k] - est.sigma_sq[k], 2);
        est.std_error[k] = std::sqrt(var / static_cast<double>(M - 1) / static_cast<double>(M));
    }
    for (int K = lag_max / 2; K < lag_max; ++K)
        for (std::size_t k = 0; k < dd; ++k)
            est.tail = std::max(est.tail, std::abs(partial[static_cast<std::size_t>(std::max(K, 1) - 1)][k] - est.sigma_sq[k]));
    project_psd(d, est.sigma_sq);
    double se_max = *std::max_element(est.std_error.begin(), est.std_error.end());
    if (est.tail > se_max)
        est.warnings.push_back("lag tail " + std::to_string(est.tail) + " exceeds the standard error; mixing may be too slow");
    return est;
}

CovarianceEstimate empirical_sigma(const std::vector<DriftPath>& paths, double T) {
    if (paths.size() < 200) throw InsufficientSamples("empirical_sigma: need at least 200 paths");
    if (!(T > 0.0)) throw ValidationError("empirical_sigma: T must be positive");
    const int d = paths.front().d;
    const std::size_t dd = static_cast<std::size_t>(d * d), M = paths.size();
    std::vector<double> w(M * static_cast<std::size_t>(d));
    std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
    for (std::size_t p = 0; p < M; ++p)
        for (int i = 0; i < d; ++i) {
            w[p * static_cast<std::size_t>(d) + static_cast<std::size_t>(i)] = paths[p].at(T, i);
            mean[static_cast<std::size_t>(i)] += paths[p].at(T, i) / static_cast<double>(M);
        }
    CovarianceEstimate est;
    est.d = d;
    est.method = "empirical";
    est.sigma_sq.assign(dd, 0.0);
    est.std_error.assign(dd, 0.0);
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) {
            std::vector<double> prod(M);
            double s = 0.0;
            for (std::size_t p = 0; p < M; ++p) {
                prod[p] = (w[p * static_cast<std::size_t>(d) + static_cast<std::size_t>(r)] - mean[static_cast<std::size_t>(r)]) *
                          (w[p * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)] - mean[static_cast<std::size_t>(c)]);
                s += prod[p];
            }
            double cov = s / static_cast<double>(M - 1);
            double var = 0.0;
            for (double v : prod) var += (v - s / static_cast<double>(M)) * (v - s / static_cast<double>(M));
            est.sigma_sq[static_cast<std::size_t>(r * d + c)] = cov / T;
            est.std_error[static_cast<std::size_t>(r * d + c)] = std::sqrt(var / static_cast<double>(M - 1) / static_cast<double>(M)) / T;
        }
    return est;
}

DonskerReport donsker_test(const std::vector<DriftPath>& paths, const std::vector<double>& sigma_sq,
                           const std::vector<double>& marginal_times, double level) {
    if (paths.size() < 200) throw InsufficientSamples("donsker_test: need at least 200 paths");
    const int d = paths.front().d;
    if (sigma_sq.size() != static_cast<std::size_t>(d * d)) throw DimensionMismatch("donsker_test: sigma_sq size");
    for (int i = 0; i < d; ++i)
        if (sigma_sq[static_cast<std::size_t>(i * d + i)] < 0.0) throw ValidationError("donsker_test: sigma_sq is not PSD");
    DonskerReport rep;
    rep.level = level;
    rep.times = marginal_times;
    const std::size_t M = paths.size();

    bool all_zero = true;
    for (const auto& p : paths)
        for (double v : p.values)
            if (v != 0.0) all_zero = false;
    double sig_norm = 0.0;
    for (double v : sigma_sq) sig_norm = std::max(sig_norm, std::abs(v));
    if (all_zero && sig_norm == 0.0) {
        rep.verdict = "deterministic-zero";
        rep.pass = true;
        return rep;
    }

    for (double t : marginal_times) {
        if (!(t > 0.0)) throw ValidationError("donsker_test: marginal times must be positive");
        std::vector<double> pv;
        for (int i = 0; i < d; ++i) {
            const double sd = std::sqrt(sigma_sq[static_cast<std::size_t>(i * d + i)]);
            std::vector<double> z(M);
            for (std::size_t p = 0; p < M; ++p) z[p] = paths[p].at(t, i) / std::sqrt(t);
            double pval;
            if (sd == 0.0) {
                pval = std::all_of(z.begin(), z.end(), [](double v) { return v == 0.0; }) ? 1.0 : 0.0;
            } else {
                double D = ks_statistic(z, [sd](double x) { return normal_cdf(x / sd); });
                pval = kolmogorov_pvalue(M, D);
            }
            pv.push_back(pval);
            rep.min_pvalue = std::min(rep.min_pvalue, pval);
            ++rep.tests;
        }
        rep.ks_pvalues.push_back(pv);
    }
    std::vector<double> grid = {0.0};
    grid.insert(grid.end(), marginal_times.begin(), marginal_times.end());
    std::sort(grid.begin(), grid.end());
    for (int i = 0; i < d; ++i) {
        std::vector<double> pv;
        for (std::size_t k = 0; k + 2 < grid.size(); ++k) {
            std::vector<double> a(M), b(M);
            for (std::size_t p = 0; p < M; ++p) {
                a[p] = paths[p].at(grid[k + 1], i) - paths[p].at(grid[k], i);
                b[p] = paths[p].at(grid[k + 2], i) - paths[p].at(grid[k + 1], i);
            }
            double pval = correlation_pvalue(pearson(a, b), M);
            pv.push_back(pval);
            rep.min_pvalue = std::min(rep.min_pvalue, pval);
            ++rep.tests;
        }
        rep.independence_pvalues.push_back(pv);
    }
    rep.pass = rep.tests == 0 || rep.min_pvalue >= level / rep.tests;
    rep.verdict = rep.pass ? "pass" : "fail";
    return rep;
}

MomentReport moment_check(const std::vector<TemporalSeries>& ensemble, double delta_exp) {
    if (!(delta_exp > 0.0 && delta_exp < 1.0)) throw ValidationError("moment_check: delta_exp must lie in (0, 1)");
    if (ensemble.empty()) throw InsufficientSamples("moment_check: empty ensemble");
    MomentReport rep;
    std::vector<double> moments;
    for (const auto& s : ensemble) {
        const int horizon = static_cast<int>(std::floor(s.horizon() + 1e-9));
        BlockIncrements b = block_increments(s, horizon);
        for (std::size_t j = 0; j < b.count; ++j) {
            double r2 = 0.0;
            for (int i = 0; i < b.d; ++i) r2 += b.x[j * static_cast<std::size_t>(b.d) + static_cast<std::size_t>(i)] * b.x[j * static_cast<std::size_t>(b.d) + static_cast<std::size_t>(i)];
            moments.push_back(std::pow(std::sqrt(r2), 2.0 + delta_exp));
        }
        // Block integrals of |bbar|.
        const std::size_t per_block = static_cast<std::size_t>(std::llround(1.0 / s.dt));
        for (int j = 1; j <= horizon; ++j) {
            double m = 0.0;
            for (std::size_t c = static_cast<std::size_t>(j - 1) * per_block; c < static_cast<std::size_t>(j) * per_block && c < s.cells(); ++c) {
                double r2 = 0.0;
                for (int i = 0; i < s.d; ++i) r2 += s.at(c, i) * s.at(c, i);
                m += std::sqrt(r2) * s.dt;
            }
            const double ratio = m / std::sqrt(static_cast<double>(j));
            rep.max_ratio = std::max(rep.max_ratio, ratio);
            const std::size_t k = static_cast<std::size_t>(std::floor(std::log2(static_cast<double>(j))));
            if (rep.dyadic_max.size() <= k) rep.dyadic_max.resize(k + 1, 0.0);
            rep.dyadic_max[k] = std::max(rep.dyadic_max[k], ratio);
        }
    }
    double sum = 0.0;
    for (double v : moments) sum += v;
    rep.moment = sum / static_cast<double>(moments.size());
    double var = 0.0;
    for (double v : moments) var += (v - rep.moment) * (v - rep.moment);
    rep.moment_std_error = moments.size() > 1 ? std::sqrt(var / static_cast<double>(moments.size() - 1) / static_cast<double>(moments.size())) : 0.0;
    // Fit over dyadic ranges from k = 1, where each range holds at least two blocks.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (std::size_t k = 1; k < rep.dyadic_max.size(); ++k) {
        if (rep.dyadic_max[k] <= 0.0) continue;
        double x = static_cast<double>(k) * std::log(2.0), y = std::log(rep.dyadic_max[k]);
        sx += x; sy += y; sxx += x * x; sxy += x * y;
        ++n;
    }
    if (n >= 2) rep.growth_slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    rep.growth_flag = rep.growth_slope > 0.0;
    return rep;
}

}  // namespace dh
