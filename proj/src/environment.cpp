#include "dh/environment.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

#include "dh/errors.hpp"
#include "dh/kernels.hpp"
#include "dh/rng.hpp"

namespace dh {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// r2c/c2r over the whole space-time lattice, time as the slowest axis.
class SpaceTimeFFT {
public:
    explicit SpaceTimeFFT(const SpaceTimeGrid& g) {
        dims_.push_back(g.n_t);
        for (int i = 0; i < g.d; ++i) dims_.push_back(g.n_x);
        real_ = g.size();
        spec_ = real_ / static_cast<std::size_t>(g.n_x) * static_cast<std::size_t>(g.n_x / 2 + 1);
        std::vector<double> r(real_);
        std::vector<cplx> c(spec_);
        std::lock_guard<std::mutex> lock(fftw_planner_lock());
        unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        int rank = static_cast<int>(dims_.size());
        fwd_ = fftw_plan_dft_r2c(rank, dims_.data(), r.data(), reinterpret_cast<fftw_complex*>(c.data()), flags);
        bwd_ = fftw_plan_dft_c2r(rank, dims_.data(), reinterpret_cast<fftw_complex*>(c.data()), r.data(),
                                 flags | FFTW_DESTROY_INPUT);
    }
    ~SpaceTimeFFT() {
        std::lock_guard<std::mutex> lock(fftw_planner_lock());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
    }
    SpaceTimeFFT(const SpaceTimeFFT&) = delete;
    SpaceTimeFFT& operator=(const SpaceTimeFFT&) = delete;

    std::size_t spectral_size() const { return spec_; }
    void forward(const double* in, cplx* out) const {
        fftw_execute_dft_r2c(fwd_, const_cast<double*>(in), reinterpret_cast<fftw_complex*>(out));
    }
    void backward(cplx* in, double* out) const {
        fftw_execute_dft_c2r(bwd_, reinterpret_cast<fftw_complex*>(in), out);
        const double scale = 1.0 / static_cast<double>(real_);
        for (std::size_t i = 0; i < real_; ++i) out[i] *= scale;
    }

private:
    std::vector<int> dims_;
    std::size_t real_ = 0;
    std::size_t spec_ = 0;
    fftw_plan fwd_;
    fftw_plan bwd_;
};

double periodic_distance(double u, double period) {
    u = std::fmod(std::abs(u), period);
    return std::min(u, period - u);
}

/// Square root of the clipped discrete spectrum of the separable covariance
/// (1 + r^2/ell_x^2)^(-beta/2) * exp(-t^2 / (2 ell_t^2)), with the space-time
/// mean and every spatial Nyquist plane removed.
std::vector<double> spectral_amplitude(const SpaceTimeGrid& g, const SpectralParams& p, const SpaceTimeFFT& fft) {
    const std::size_t ns = g.spatial_size();
    std::vector<double> cov(g.size());
    std::vector<double> spatial(ns);
    std::vector<long> idx(static_cast<std::size_t>(g.d), 0);
    for (std::size_t q = 0; q < ns; ++q) {
        std::size_t rest = q;
        double r2 = 0.0;
        for (int j = g.d - 1; j >= 0; --j) {
            long m = static_cast<long>(rest % static_cast<std::size_t>(g.n_x));
            rest /= static_cast<std::size_t>(g.n_x);
            double dist = periodic_distance(m * g.h(), g.L);
            r2 += dist * dist;
        }
        spatial[q] = std::pow(1.0 + r2 / (p.ell_x * p.ell_x), -0.5 * p.beta_decay);
    }
    for (int n = 0; n < g.n_t; ++n) {
        double tt = periodic_distance(n * g.k(), g.T_env);
        double ct = std::exp(-tt * tt / (2.0 * p.ell_t * p.ell_t));
        for (std::size_t q = 0; q < ns; ++q) cov[static_cast<std::size_t>(n) * ns + q] = ct * spatial[q];
    }
    std::vector<cplx> spec(fft.spectral_size());
    fft.forward(cov.data(), spec.data());

    std::vector<double> amp(spec.size());
    const std::size_t half = static_cast<std::size_t>(g.n_x / 2 + 1);
    for (std::size_t m = 0; m < spec.size(); ++m) {
        std::size_t rest = m;
        bool nyquist = false;
        bool all_zero = true;
        long last = static_cast<long>(rest % half);
        rest /= half;
        if (last == g.n_x / 2) nyquist = true;
        if (last != 0) all_zero = false;
        for (int j = 0; j < g.d - 1; ++j) {
            long v = static_cast<long>(rest % static_cast<std::size_t>(g.n_x));
            rest /= static_cast<std::size_t>(g.n_x);
            if (v == g.n_x / 2) nyquist = true;
            if (v != 0) all_zero = false;
        }
        if (rest != 0) all_zero = false;
        double s = spec[m].real();
        amp[m] = (nyquist || all_zero || s <= 0.0) ? 0.0 : std::sqrt(s);
    }
    return amp;
}

Field synthesize(const SpaceTimeGrid& g, const std::vector<double>& amp, const SpaceTimeFFT& fft,
                 std::uint64_t seed, const std::string& tag, double amplitude) {
    Field out(g.size(), 0.0);
    if (amplitude == 0.0) return out;
    Rng rng = make_rng(seed, "field:" + tag);
    std::normal_distribution<double> normal(0.0, 1.0);
    Field noise(g.size());
    for (double& v : noise) v = normal(rng);
    std::vector<cplx> spec(fft.spectral_size());
    fft.forward(noise.data(), spec.data());
    for (std::size_t m = 0; m < spec.size(); ++m) spec[m] *= amp[m] * amplitude;
    fft.backward(spec.data(), out.data());
    return out;
}

double eta_integral(double u0, double u1) {
    return (u1 - u0) - (std::sin(kTwoPi * u1) - std::sin(kTwoPi * u0)) / kTwoPi;
}

void demean_series(std::vector<double>& values, int d) {
    const std::size_t n = values.size() / static_cast<std::size_t>(d);
    for (int i = 0; i < d; ++i) {
        double mean = 0.0;
        for (std::size_t t = 0; t < n; ++t) mean += values[t * static_cast<std::size_t>(d) + static_cast<std::size_t>(i)];
        mean /= static_cast<double>(n);
        for (std::size_t t = 0; t < n; ++t) values[t * static_cast<std::size_t>(d) + static_cast<std::size_t>(i)] -= mean;
    }
}

}  // namespace

void SpectralParams::validate(int d) const {
    if (!(ell_x > 0.0) || !(ell_t > 0.0)) throw ValidationError("params: correlation lengths must be positive");
    if (!(beta_decay > 2.0))
        throw ValidationError(
            "params: beta_decay must exceed 2 (the stream-matrix construction needs drift correlations "
            "decaying faster than |x|^-2)");
    if (!(lambda > 0.0) || !(Lambda >= lambda) || !std::isfinite(Lambda))
        throw ValidationError("params: need 0 < lambda <= Lambda < inf");
    if (sigma_s < 0.0 || sigma_a < 0.0) throw ValidationError("params: amplitudes must be non-negative");
    if (d * sigma_a > std::sqrt(Lambda - lambda) * (1.0 + 1e-12))
        throw ValidationError("params: d*sigma_a must not exceed sqrt(Lambda - lambda) (ellipticity by construction)");
}

BbarModel parse_bbar_model(const std::string& name) {
    if (name == "zero") return BbarModel::zero;
    if (name == "periodic") return BbarModel::periodic;
    if (name == "ou") return BbarModel::ou;
    if (name == "rw-interp") return BbarModel::rw_interp;
    throw ValidationError("bbar: unknown model '" + name + "' (expected zero, periodic, ou, rw-interp)");
}

std::string to_string(BbarModel m) {
    switch (m) {
        case BbarModel::zero: return "zero";
        case BbarModel::periodic: return "periodic";
        case BbarModel::ou: return "ou";
        case BbarModel::rw_interp: return "rw-interp";
    }
    return "zero";
}

void BbarSpec::validate() const {
    if (!(amplitude >= 0.0) || !std::isfinite(amplitude)) throw ValidationError("bbar: amplitude must be >= 0");
    if (!(period > 0.0)) throw ValidationError("bbar: period must be positive");
    if (!(tau > 0.0)) throw ValidationError("bbar: tau must be positive");
}

double TemporalSeries::integral(int i, double t) const {
    if (t <= 0.0) return 0.0;
    double pos = t / dt;
    std::size_t full = static_cast<std::size_t>(std::floor(pos));
    full = std::min(full, cells());
    double acc = 0.0;
    for (std::size_t n = 0; n < full; ++n) acc += at(n, i);
    acc *= dt;
    if (full < cells()) acc += (t - static_cast<double>(full) * dt) * at(full, i);
    return acc;
}

TemporalSeries bbar_series(const BbarSpec& spec, int d, double horizon, double dt, std::uint64_t seed) {
    spec.validate();
    if (!(dt > 0.0) || !(horizon > 0.0)) throw ValidationError("bbar_series: horizon and dt must be positive");
    TemporalSeries out;
    out.d = d;
    out.dt = dt;
    const std::size_t n = static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
    out.values.assign(n * static_cast<std::size_t>(d), 0.0);
    Rng rng = make_rng(seed, "bbar");
    auto set = [&](std::size_t t, int i, double v) { out.values[t * static_cast<std::size_t>(d) + static_cast<std::size_t>(i)] = v; };

    switch (spec.model) {
        case BbarModel::zero: break;
        case BbarModel::periodic: {
            std::uniform_real_distribution<double> uni(0.0, kTwoPi);
            const double w = kTwoPi / spec.period;
            for (int i = 0; i < d; ++i) {
                double phase = uni(rng);
                for (std::size_t t = 0; t < n; ++t) {
                    double t0 = static_cast<double>(t) * dt, t1 = t0 + dt;
                    set(t, i, spec.amplitude * (std::cos(w * t0 + phase) - std::cos(w * t1 + phase)) / (w * dt));
                }
            }
            break;
        }
        case BbarModel::ou: {
            std::normal_distribution<double> normal(0.0, 1.0);
            const double rho = std::exp(-dt / spec.tau);
            const double innov = spec.amplitude * std::sqrt(1.0 - rho * rho);
            std::vector<double> state(static_cast<std::size_t>(d));
            for (auto& v : state) v = spec.amplitude * normal(rng);
            for (std::size_t t = 0; t < n; ++t) {
                for (int i = 0; i < d; ++i) {
                    set(t, i, state[static_cast<std::size_t>(i)]);
                    state[static_cast<std::size_t>(i)] = rho * state[static_cast<std::size_t>(i)] + innov * normal(rng);
                }
            }
            break;
        }
        case BbarModel::rw_interp: {
            std::uniform_real_distribution<double> uni(0.0, 1.0);
            std::bernoulli_distribution coin(0.5);
            const double offset = uni(rng);
            const std::size_t blocks = static_cast<std::size_t>(std::ceil(horizon + 2.0));
            std::vector<double> xi(blocks * static_cast<std::size_t>(d));
            for (auto& v : xi) v = coin(rng) ? spec.amplitude : -spec.amplitude;
            for (std::size_t t = 0; t < n; ++t) {
                double u0 = static_cast<double>(t) * dt + offset, u1 = u0 + dt;
                std::vector<double> acc(static_cast<std::size_t>(d), 0.0);
                double a = u0;
                while (a < u1 - 1e-15) {
                    double j = std::floor(a);
                    double b = std::min(u1, j + 1.0);
                    double w = eta_integral(a - j, b - j);
                    std::size_t jb = static_cast<std::size_t>(j);
                    for (int i = 0; i < d; ++i) acc[static_cast<std::size_t>(i)] += w * xi[jb * static_cast<std::size_t>(d) + static_cast<std::size_t>(i)];
                    a = b;
                }
                for (int i = 0; i < d; ++i) set(t, i, acc[static_cast<std::size_t>(i)] / dt);
            }
            break;
        }
    }
    return out;
}

std::vector<double> analytic_sigma_sq(const BbarSpec& spec, int d) {
    std::vector<double> m(static_cast<std::size_t>(d * d), 0.0);
    double v = 0.0;
    if (spec.model == BbarModel::ou) v = 2.0 * spec.amplitude * spec.amplitude * spec.tau;
    if (spec.model == BbarModel::rw_interp) v = spec.amplitude * spec.amplitude;
    for (int i = 0; i < d; ++i) m[static_cast<std::size_t>(i * d + i)] = v;
    return m;
}

Field sample_gaussian_field(const SpaceTimeGrid& grid, const SpectralParams& params, std::uint64_t seed,
                            const std::string& channel_tag, double amplitude) {
    grid.validate();
    params.validate(grid.d);
    SpaceTimeFFT fft(grid);
    auto amp = spectral_amplitude(grid, params, fft);
    return synthesize(grid, amp, fft, seed, channel_tag, amplitude);
}

EnvironmentRealization build_environment(const SpaceTimeGrid& grid, const SpectralParams& params,
                                         std::uint64_t seed, const BbarSpec& bbar) {
    grid.validate();
    params.validate(grid.d);
    bbar.validate();
    if (bbar.model == BbarModel::periodic) {
        double ratio = grid.T_env / bbar.period;
        if (std::abs(ratio - std::round(ratio)) > 1e-9 || std::round(ratio) < 1.0)
            throw ValidationError("bbar: periodic model needs a period dividing T_env");
    }
    const int d = grid.d;
    const std::size_t n = grid.size();
    EnvironmentRealization env;
    env.grid = grid;
    env.params = params;
    env.bbar_spec = bbar;
    env.seed = seed;
    env.a = MatrixField(d, n);
    env.s = MatrixField(d, n);

    SpaceTimeFFT fft(grid);
    auto amp = spectral_amplitude(grid, params, fft);

    MatrixField m(d, n);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            if (params.sigma_a == 0.0) continue;
            Field g = synthesize(grid, amp, fft, seed, "a" + std::to_string(i) + std::to_string(j), 1.0);
            Field& mij = m.at(i, j);
            for (std::size_t q = 0; q < n; ++q) mij[q] = params.sigma_a * g[q] / (1.0 + std::abs(g[q]));
        }
    for (int i = 0; i < d; ++i)
        for (int k = i; k < d; ++k) {
            Field& aik = env.a.at(i, k);
            for (std::size_t q = 0; q < n; ++q) {
                double v = (i == k) ? params.lambda : 0.0;
                for (int j = 0; j < d; ++j) v += m.at(j, i)[q] * m.at(j, k)[q];
                aik[q] = v;
            }
            if (k != i) env.a.at(k, i) = aik;
        }
    for (int j = 0; j < d; ++j)
        for (int k = j + 1; k < d; ++k) {
            Field g = synthesize(grid, amp, fft, seed, "s" + std::to_string(j) + std::to_string(k), params.sigma_s);
            Field& skj = env.s.at(k, j);
            for (std::size_t q = 0; q < n; ++q) skj[q] = -g[q];
            env.s.at(j, k) = std::move(g);
        }

    TemporalSeries series = bbar_series(bbar, d, grid.T_env, grid.k(), derive_seed(seed, "bbar-torus"));
    series.values.resize(static_cast<std::size_t>(grid.n_t) * static_cast<std::size_t>(d), 0.0);
    demean_series(series.values, d);
    env.bbar = std::move(series.values);
    audit_ellipticity(env);
    return env;
}

EnvironmentRealization trivial_environment(const SpaceTimeGrid& grid, double lambda) {
    grid.validate();
    EnvironmentRealization env;
    env.grid = grid;
    env.params.sigma_a = 0.0;
    env.params.sigma_s = 0.0;
    env.params.lambda = lambda;
    env.params.Lambda = lambda;
    env.a = MatrixField(grid.d, grid.size());
    env.s = MatrixField(grid.d, grid.size());
    for (int i = 0; i < grid.d; ++i) std::fill(env.a.at(i, i).begin(), env.a.at(i, i).end(), lambda);
    env.bbar.assign(static_cast<std::size_t>(grid.n_t * grid.d), 0.0);
    return env;
}

EnvironmentRealization laminate_environment(const SpaceTimeGrid& grid, const std::function<double(double)>& alpha) {
    grid.validate();
    EnvironmentRealization env = trivial_environment(grid, 1.0);
    const std::size_t ns = grid.spatial_size();
    const std::size_t stride = ns / static_cast<std::size_t>(grid.n_x);
    double lo = INFINITY, hi = 0.0;
    for (std::size_t q = 0; q < grid.size(); ++q) {
        std::size_t x1 = (q % ns) / stride;
        double v = alpha(static_cast<double>(x1) * grid.h());
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        for (int i = 0; i < grid.d; ++i) env.a.at(i, i)[q] = v;
    }
    if (!(lo > 0.0)) throw ValidationError("laminate: alpha must be positive");
    env.params.lambda = lo;
    env.params.Lambda = hi;
    return env;
}

TemporalSeries torus_bbar_series(const EnvironmentRealization& env, double horizon) {
    TemporalSeries out;
    out.d = env.grid.d;
    out.dt = env.grid.k();
    const std::size_t n = static_cast<std::size_t>(std::ceil(horizon / out.dt - 1e-9));
    out.values.resize(n * static_cast<std::size_t>(out.d));
    const std::size_t period = env.bbar.size();
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = env.bbar[i % period];
    return out;
}

std::vector<double> sym_eigenvalues(int d, const double* m) {
    if (d == 2) {
        double tr = 0.5 * (m[0] + m[3]);
        double off = 0.5 * (m[1] + m[2]);
        double disc = std::sqrt(0.25 * (m[0] - m[3]) * (m[0] - m[3]) + off * off);
        return {tr - disc, tr + disc};
    }
    Eigen::MatrixXd a(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = 0.5 * (m[i * d + j] + m[j * d + i]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
    std::vector<double> ev(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) ev[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
    return ev;
}

void audit_ellipticity(const EnvironmentRealization& env) {
    const int d = env.grid.d;
    const double lam = env.params.lambda, Lam = env.params.Lambda;
    std::vector<double> m(static_cast<std::size_t>(d * d));
    for (std::size_t q = 0; q < env.a.nodes(); ++q) {
        for (int i = 0; i < d * d; ++i) m[static_cast<std::size_t>(i)] = env.a.c[static_cast<std::size_t>(i)][q];
        auto ev = sym_eigenvalues(d, m.data());
        if (ev.front() < lam * (1.0 - 1e-12) || ev.back() > Lam * (1.0 + 1e-12))
            throw EllipticityViolation("environment: eigenvalues [" + std::to_string(ev.front()) + ", " +
                                       std::to_string(ev.back()) + "] outside [lambda, Lambda] at node " +
                                       std::to_string(q));
    }
}

VectorField spectral_gradient(const SpatialFFT& fft, std::size_t n_slices, const Field& u) {
    const int d = fft.dim();
    const std::size_t ns = fft.real_size(), nk = fft.spectral_size();
    VectorField g(static_cast<std::size_t>(d), Field(u.size()));
    const long nsl = static_cast<long>(n_slices);
#pragma omp parallel num_threads(kernels::threads())
    {
        std::vector<cplx> hat(nk), tmp(nk);
#pragma omp for schedule(static)
        for (long t = 0; t < nsl; ++t) {
            const std::size_t off = static_cast<std::size_t>(t) * ns;
            fft.forward(u.data() + off, hat.data());
            for (int j = 0; j < d; ++j) {
                const auto& kj = fft.kappa(j);
                for (std::size_t m = 0; m < nk; ++m) tmp[m] = cplx(0.0, kj[m]) * hat[m];
                fft.backward(tmp.data(), g[static_cast<std::size_t>(j)].data() + off);
            }
        }
    }
    return g;
}

Field spectral_divergence(const SpatialFFT& fft, std::size_t n_slices, const VectorField& v) {
    const int d = fft.dim();
    const std::size_t ns = fft.real_size(), nk = fft.spectral_size();
    Field out(n_slices * ns);
    const long nsl = static_cast<long>(n_slices);
#pragma omp parallel num_threads(kernels::threads())
    {
        std::vector<cplx> hat(nk), acc(nk);
#pragma omp for schedule(static)
        for (long t = 0; t < nsl; ++t) {
            const std::size_t off = static_cast<std::size_t>(t) * ns;
            std::fill(acc.begin(), acc.end(), cplx(0.0, 0.0));
            for (int j = 0; j < d; ++j) {
                fft.forward(v[static_cast<std::size_t>(j)].data() + off, hat.data());
                const auto& kj = fft.kappa(j);
                for (std::size_t m = 0; m < nk; ++m) acc[m] += cplx(0.0, kj[m]) * hat[m];
            }
            fft.backward(acc.data(), out.data() + off);
        }
    }
    return out;
}

VectorField drift_of(const EnvironmentRealization& env) {
    const auto& g = env.grid;
    const int d = g.d;
    SpatialFFT fft(d, g.n_x, g.L);
    VectorField b(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
        VectorField row(static_cast<std::size_t>(d));
        for (int j = 0; j < d; ++j) row[static_cast<std::size_t>(j)] = env.s.at(i, j);
        b[static_cast<std::size_t>(i)] = spectral_divergence(fft, static_cast<std::size_t>(g.n_t), row);
        const std::size_t ns = g.spatial_size();
        for (int t = 0; t < g.n_t; ++t) {
            double v = env.bbar_at(t, i);
            for (std::size_t q = 0; q < ns; ++q) b[static_cast<std::size_t>(i)][static_cast<std::size_t>(t) * ns + q] += v;
        }
    }
    return b;
}

std::vector<double> eval_rescaled(const EnvironmentRealization& env, double eps, std::span<const double> x,
                                  double t, Coefficient which) {
    if (!(eps > 0.0)) throw ValidationError("eval_rescaled: eps must be positive");
    const auto& g = env.grid;
    const int d = g.d;
    if (static_cast<int>(x.size()) != d) throw DimensionMismatch("eval_rescaled: point dimension");
    auto locate = [](double u, double period, int n, long& i0, double& w) {
        double v = std::fmod(u, period);
        if (v < 0) v += period;
        double p = v / period * n;
        i0 = static_cast<long>(std::floor(p));
        w = p - static_cast<double>(i0);
        if (i0 >= n) { i0 -= n; }
    };
    long it;
    double wt;
    locate(t / (eps * eps), g.T_env, g.n_t, it, wt);
    if (which == Coefficient::bbar) {
        std::vector<double> out(static_cast<std::size_t>(d));
        long it1 = (it + 1) % g.n_t;
        for (int i = 0; i < d; ++i) out[static_cast<std::size_t>(i)] = (1.0 - wt) * env.bbar_at(static_cast<int>(it), i) + wt * env.bbar_at(static_cast<int>(it1), i);
        return out;
    }
    std::vector<long> ix(static_cast<std::size_t>(d));
    std::vector<double> wx(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) locate(x[static_cast<std::size_t>(j)] / eps, g.L, g.n_x, ix[static_cast<std::size_t>(j)], wx[static_cast<std::size_t>(j)]);
    const MatrixField& f = which == Coefficient::a ? env.a : env.s;
    std::vector<double> out(static_cast<std::size_t>(d * d), 0.0);
    std::vector<long> corner(static_cast<std::size_t>(d));
    for (int mask = 0; mask < (1 << (d + 1)); ++mask) {
        double w = (mask & 1) ? wt : 1.0 - wt;
        long tc = it + (mask & 1);
        for (int j = 0; j < d; ++j) {
            int bit = (mask >> (j + 1)) & 1;
            w *= bit ? wx[static_cast<std::size_t>(j)] : 1.0 - wx[static_cast<std::size_t>(j)];
            corner[static_cast<std::size_t>(j)] = ix[static_cast<std::size_t>(j)] + bit;
        }
        if (w == 0.0) continue;
        std::size_t q = g.index(tc, corner.data());
        for (int c = 0; c < d * d; ++c) out[static_cast<std::size_t>(c)] += w * f.c[static_cast<std::size_t>(c)][q];
    }
    return out;
}

}  // namespace dh
