#include "dh/corrector.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <memory>
#include <numbers>

#include "dh/errors.hpp"
#include "dh/fft.hpp"
#include "dh/kernels.hpp"

namespace dh {

namespace {

/// The corrector system matrix and its phase-shifted constant-coefficient preconditioner.
class TorusOperator {
public:
    TorusOperator(const EnvironmentRealization& env, double delta, bool transpose)
        : g_(env.grid), fft_(env.grid.d, env.grid.n_x, env.grid.L), bbar_(env.bbar), delta_(delta),
          sign_t_(transpose ? -1.0 : 1.0), sign_b_(transpose ? 1.0 : -1.0), C_(env.grid.d, env.grid.size()) {
        const int d = g_.d;
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                const Field& a = env.a.at(i, j);
                const Field& s = env.s.at(i, j);
                Field& c = C_.at(i, j);
                for (std::size_t q = 0; q < c.size(); ++q) c[q] = transpose ? a[q] - s[q] : a[q] + s[q];
            }
        double tr = 0.0;
        for (int i = 0; i < d; ++i) tr += kernels::sum(env.a.at(i, i).data(), g_.size());
        lambda_ref_ = tr / (static_cast<double>(d) * static_cast<double>(g_.size()));
        W_ = drift_primitive(env);
        time_fft_ = std::make_unique<StridedFFT>(g_.n_t, fft_.spectral_size());
    }

    const SpatialFFT& fft() const { return fft_; }
    const MatrixField& coefficients() const { return C_; }

    void apply(const std::vector<double>& x, std::vector<double>& y) const {
        const int d = g_.d;
        const std::size_t ns = fft_.real_size(), nk = fft_.spectral_size();
        const long nt = g_.n_t;
        const double inv2k = 1.0 / (2.0 * g_.k());
        y.resize(x.size());
#pragma omp parallel num_threads(kernels::threads())
        {
            std::vector<cplx> xh(nk), tmp(nk), acc(nk);
            std::vector<Field> grad(static_cast<std::size_t>(d), Field(ns)), flux(static_cast<std::size_t>(d), Field(ns));
            std::vector<const double*> Mp(static_cast<std::size_t>(d * d)), gp(static_cast<std::size_t>(d));
            std::vector<double*> fp(static_cast<std::size_t>(d));
#pragma omp for schedule(static)
            for (long t = 0; t < nt; ++t) {
                const std::size_t off = static_cast<std::size_t>(t) * ns;
                fft_.forward(x.data() + off, xh.data());
                std::fill(acc.begin(), acc.end(), cplx(0.0, 0.0));
                for (int j = 0; j < d; ++j) {
                    const auto& kj = fft_.kappa(j);
                    const double bj = sign_b_ * bbar_[static_cast<std::size_t>(t * d + j)];
                    for (std::size_t m = 0; m < nk; ++m) {
                        tmp[m] = cplx(0.0, kj[m]) * xh[m];
                        acc[m] += bj * tmp[m];
                    }
                    fft_.backward(tmp.data(), grad[static_cast<std::size_t>(j)].data());
                }
                for (int c = 0; c < d * d; ++c) Mp[static_cast<std::size_t>(c)] = C_.c[static_cast<std::size_t>(c)].data() + off;
                for (int j = 0; j < d; ++j) {
                    gp[static_cast<std::size_t>(j)] = grad[static_cast<std::size_t>(j)].data();
                    fp[static_cast<std::size_t>(j)] = flux[static_cast<std::size_t>(j)].data();
                }
                kernels::apply_matrix_serial(d, ns, Mp.data(), gp.data(), fp.data());
                for (int i = 0; i < d; ++i) {
                    fft_.forward(flux[static_cast<std::size_t>(i)].data(), tmp.data());
                    const auto& ki = fft_.kappa(i);
                    for (std::size_t m = 0; m < nk; ++m) acc[m] -= cplx(0.0, ki[m]) * tmp[m];
                }
                double* yt = y.data() + off;
                fft_.backward(acc.data(), yt);
                const double* xp = x.data() + static_cast<std::size_t>((t + 1) % nt) * ns;
                const double* xm = x.data() + static_cast<std::size_t>((t + nt - 1) % nt) * ns;
                const double* xt = x.data() + off;
                for (std::size_t q = 0; q < ns; ++q) yt[q] += delta_ * xt[q] + sign_t_ * (xp[q] - xm[q]) * inv2k;
            }
        }
    }

    void precondition(const std::vector<double>& r, std::vector<double>& z) const {
        const int d = g_.d;
        const std::size_t ns = fft_.real_size(), nk = fft_.spectral_size();
        const long nt = g_.n_t;
        std::vector<cplx> buf(static_cast<std::size_t>(nt) * nk);
        z.resize(r.size());
        phase_pass(r.data(), buf, -1.0);
        time_fft_->forward(buf.data());
        const auto& k2 = fft_.kappa_sq();
        const auto& null = fft_.null_mode();
        const double pi2 = 2.0 * std::numbers::pi;
        for (long m = 0; m < nt; ++m) {
            const double w = sign_t_ * std::sin(pi2 * static_cast<double>(m) / static_cast<double>(nt)) / g_.k();
            cplx* row = buf.data() + static_cast<std::size_t>(m) * nk;
            for (std::size_t q = 0; q < nk; ++q) {
                if (null[q]) {
                    row[q] = 0.0;
                    continue;
                }
                row[q] /= cplx(delta_ + lambda_ref_ * k2[q], w) * static_cast<double>(nt);
            }
        }
        time_fft_->backward(buf.data());
#pragma omp parallel num_threads(kernels::threads())
        {
            std::vector<cplx> tmp(nk);
#pragma omp for schedule(static)
            for (long t = 0; t < nt; ++t) {
                cplx* row = buf.data() + static_cast<std::size_t>(t) * nk;
                for (std::size_t q = 0; q < nk; ++q) tmp[q] = row[q] * phase(t, q, 1.0);
                fft_.backward(tmp.data(), z.data() + static_cast<std::size_t>(t) * ns);
            }
        }
        (void)d;
    }

private:
    cplx phase(long t, std::size_t q, double sign) const {
        double arg = 0.0;
        for (int j = 0; j < g_.d; ++j) arg += fft_.kappa(j)[q] * W_[static_cast<std::size_t>(t * g_.d + j)];
        if (arg == 0.0) return 1.0;
        return std::polar(1.0, sign * arg);
    }

    void phase_pass(const double* r, std::vector<cplx>& buf, double sign) const {
        const std::size_t ns = fft_.real_size(), nk = fft_.spectral_size();
        const long nt = g_.n_t;
#pragma omp parallel for schedule(static) num_threads(kernels::threads())
        for (long t = 0; t < nt; ++t) {
            cplx* row = buf.data() + static_cast<std::size_t>(t) * nk;
            fft_.forward(r + static_cast<std::size_t>(t) * ns, row);
            for (std::size_t q = 0; q < nk; ++q) row[q] *= phase(t, q, sign);
        }
    }

    SpaceTimeGrid g_;
    SpatialFFT fft_;
    std::vector<double> bbar_;
    double delta_;
    double sign_t_;
    double sign_b_;
    MatrixField C_;
    double lambda_ref_ = 1.0;
    std::vector<double> W_;
    std::unique_ptr<StridedFFT> time_fft_;
};

double norm_vec(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double torus_mean(const Field& f) { return kernels::sum(f.data(), f.size()) / static_cast<double>(f.size()); }

}  // namespace

std::vector<double> drift_primitive(const EnvironmentRealization& env) {
    const int d = env.grid.d, nt = env.grid.n_t;
    const double k = env.grid.k();
    std::vector<double> W(static_cast<std::size_t>(nt * d), 0.0);
    for (int t = 1; t < nt; ++t)
        for (int i = 0; i < d; ++i)
            W[static_cast<std::size_t>(t * d + i)] =
                W[static_cast<std::size_t>((t - 1) * d + i)] + 0.5 * k * (env.bbar_at(t - 1, i) + env.bbar_at(t, i));
    return W;
}

CorrectorField solve_corrector(const CorrectorProblem& problem, const GmresOptions& opts) {
    if (problem.env == nullptr) throw ValidationError("corrector: missing environment");
    const EnvironmentRealization& env = *problem.env;
    const int d = env.grid.d;
    if (static_cast<int>(problem.direction.size()) != d) throw DimensionMismatch("corrector: direction has wrong dimension");
    if (!(norm_vec(problem.direction) > 0.0)) throw ValidationError("corrector: direction must be non-zero");
    if (!(problem.delta >= 0.0)) throw ValidationError("corrector: delta must be >= 0");

    TorusOperator op(env, problem.delta, problem.transpose);
    const std::size_t n = env.grid.size(), ns = env.grid.spatial_size();
    const SpatialFFT& fft = op.fft();

    // Right-hand side: div(C xi) = sum_j D_j (C xi)_j.
    VectorField cxi(static_cast<std::size_t>(d), Field(n, 0.0));
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            const double xj = problem.direction[static_cast<std::size_t>(j)];
            if (xj == 0.0) continue;
            const Field& c = op.coefficients().at(i, j);
            Field& out = cxi[static_cast<std::size_t>(i)];
            for (std::size_t q = 0; q < n; ++q) out[q] += c[q] * xj;
        }
    Field rhs = spectral_divergence(fft, static_cast<std::size_t>(env.grid.n_t), cxi);

    if (problem.delta == 0.0) {
        // The kernel of the delta = 0 system lies in the spatially constant modes, which the
        // right-hand side must not excite.
        double worst = 0.0, scale = 0.0;
        for (int t = 0; t < env.grid.n_t; ++t) {
            const std::size_t off = static_cast<std::size_t>(t) * ns;
            worst = std::max(worst, std::abs(kernels::sum(rhs.data() + off, ns)) / static_cast<double>(ns));
        }
        for (double v : rhs) scale = std::max(scale, std::abs(v));
        if (worst > 1e-10 * std::max(scale, 1.0)) throw IllPosed("corrector: delta = 0 and the forcing excites the zero mode");
    }

    CorrectorField cf;
    cf.delta = problem.delta;
    cf.transpose = problem.transpose;
    cf.direction = problem.direction;
    cf.phi.assign(n, 0.0);
    GmresResult gr = gmres([&](const std::vector<double>& in, std::vector<double>& out) { op.apply(in, out); },
                           [&](const std::vector<double>& in, std::vector<double>& out) { op.precondition(in, out); },
                           rhs, cf.phi, opts);
    cf.iterations = gr.iterations;
    cf.residual_history = gr.history;
    cf.residual_norm = gr.relative_residual;
    if (!gr.converged)
        throw NonConvergence("corrector: GMRES stopped at relative residual " + std::to_string(gr.relative_residual) +
                                 " after " + std::to_string(gr.iterations) + " iterations",
                             gr.history);

    cf.grad_phi = spectral_gradient(fft, static_cast<std::size_t>(env.grid.n_t), cf.phi);
    cf.flux.assign(static_cast<std::size_t>(d), Field(n, 0.0));
    for (int i = 0; i < d; ++i) {
        Field& fi = cf.flux[static_cast<std::size_t>(i)];
        fi = cxi[static_cast<std::size_t>(i)];
        for (int j = 0; j < d; ++j) {
            const Field& c = op.coefficients().at(i, j);
            const Field& gj = cf.grad_phi[static_cast<std::size_t>(j)];
            for (std::size_t q = 0; q < n; ++q) fi[q] += c[q] * gj[q];
        }
    }
    return cf;
}

EffectiveMatrix effective_matrix(const EnvironmentRealization& env, double delta, const GmresOptions& opts) {
    if (!(delta > 0.0)) throw ValidationError("effective_matrix: delta must be positive");
    const int d = env.grid.d;
    const std::size_t n = env.grid.size();
    EffectiveMatrix em;
    em.d = d;
    em.delta = delta;
    em.grid = env.grid;
    em.seeds = {env.seed};
    em.a_bar.assign(static_cast<std::size_t>(d * d), 0.0);
    em.m_bar.assign(static_cast<std::size_t>(d * d), 0.0);
    em.residuals.assign(static_cast<std::size_t>(2 * d), 0.0);
    em.iterations.assign(static_cast<std::size_t>(2 * d), 0);
    std::vector<double> grad_sq(static_cast<std::size_t>(d), 0.0);

    const int jobs = 2 * d;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
    const int outer = std::min(jobs, kernels::threads());
    const int saved = kernels::threads();
    if (outer > 1) kernels::set_threads(1);
#pragma omp parallel for schedule(dynamic) num_threads(outer)
    for (int job = 0; job < jobs; ++job) {
        try {
            const bool tr = job >= d;
            const int i = job % d;
            CorrectorProblem p{&env, std::vector<double>(static_cast<std::size_t>(d), 0.0), delta, tr};
            p.direction[static_cast<std::size_t>(i)] = 1.0;
            CorrectorField cf = solve_corrector(p, opts);
            auto& target = tr ? em.m_bar : em.a_bar;
            for (int r = 0; r < d; ++r) target[static_cast<std::size_t>(r * d + i)] = torus_mean(cf.flux[static_cast<std::size_t>(r)]);
            em.residuals[static_cast<std::size_t>(job)] = cf.residual_norm;
            em.iterations[static_cast<std::size_t>(job)] = cf.iterations;
            if (!tr) {
                double acc = 0.0;
                for (int r = 0; r < d; ++r) acc += kernels::dot(cf.grad_phi[static_cast<std::size_t>(r)].data(), cf.grad_phi[static_cast<std::size_t>(r)].data(), n);
                grad_sq[static_cast<std::size_t>(i)] = acc / static_cast<double>(n);
            }
        } catch (...) {
            errors[static_cast<std::size_t>(job)] = std::current_exception();
        }
    }
    if (outer > 1) kernels::set_threads(saved);
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    auto ev = sym_eigenvalues(d, em.a_bar.data());
    em.lambda_min = ev.front();
    double s_sq = 0.0;
    for (const auto& c : env.s.c) s_sq += kernels::dot(c.data(), c.data(), n);
    s_sq /= static_cast<double>(n);
    double phi_sq = 0.0;
    for (double v : grad_sq) phi_sq += v;
    em.upper_cert = (env.params.Lambda + std::sqrt(s_sq)) * (1.0 + std::sqrt(phi_sq));
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            em.duality_gap = std::max(em.duality_gap, std::abs(em.a_bar[static_cast<std::size_t>(i * d + j)] - em.m_bar[static_cast<std::size_t>(j * d + i)]));
    if (em.lambda_min < env.params.lambda - 10.0 * opts.tol)
        throw EllipticityViolation("effective_matrix: lambda_min " + std::to_string(em.lambda_min) + " below lambda " +
                                   std::to_string(env.params.lambda));
    return em;
}

double energy_check(const CorrectorField& cf, const EnvironmentRealization& env, std::span<const double> direction) {
    const int d = env.grid.d;
    const std::size_t n = env.grid.size();
    double quad = 0.0, forcing = 0.0, grad_sq = 0.0;
    for (std::size_t q = 0; q < n; ++q) {
        for (int i = 0; i < d; ++i) {
            const double gi = cf.grad_phi[static_cast<std::size_t>(i)][q];
            grad_sq += gi * gi;
            double agi = 0.0, fi = 0.0;
            for (int j = 0; j < d; ++j) {
                const double gj = cf.grad_phi[static_cast<std::size_t>(j)][q];
                agi += env.a.at(i, j)[q] * gj;
                const double sij = cf.transpose ? -env.s.at(i, j)[q] : env.s.at(i, j)[q];
                fi += (env.a.at(i, j)[q] + sij) * direction[static_cast<std::size_t>(j)];
            }
            quad += agi * gi;
            forcing += fi * gi;
        }
    }
    const double inv = 1.0 / static_cast<double>(n);
    double xi_sq = 0.0;
    for (double v : direction) xi_sq += v * v;
    return std::abs(quad * inv + forcing * inv) / (grad_sq * inv + xi_sq);
}

std::vector<SublinearityRow> sublinearity_diagnostic(const CorrectorField& cf, const EnvironmentRealization& env,
                                                     const std::vector<double>& eps_list, double R,
                                                     int samples_per_period) {
    const auto& g = env.grid;
    const int d = g.d;
    for (std::size_t i = 1; i < eps_list.size(); ++i)
        if (!(eps_list[i] < eps_list[i - 1])) throw ValidationError("sublinearity: eps_list must be decreasing");
    const std::vector<double> W = drift_primitive(env);
    std::vector<SublinearityRow> rows;
    for (double eps : eps_list) {
        const int nx = std::max(2, static_cast<int>(std::ceil(2.0 * R / (eps * g.L) * samples_per_period)));
        const int ntm = std::max(2, static_cast<int>(std::ceil(R * R / (eps * eps * g.T_env) * samples_per_period)));
        const double hx = 2.0 * R / nx, ht = R * R / ntm;
        std::size_t total = 1;
        for (int j = 0; j < d; ++j) total *= static_cast<std::size_t>(nx);
        double sum = 0.0, sum_sq = 0.0, volume = 0.0;
        std::vector<double> z(static_cast<std::size_t>(d));
        std::vector<long> corner(static_cast<std::size_t>(d)), ix(static_cast<std::size_t>(d));
        std::vector<double> wx(static_cast<std::size_t>(d));
        for (int it = 0; it < ntm; ++it) {
            const double t = (it + 0.5) * ht;
            double tau = std::fmod(t / (eps * eps), g.T_env);
            double pt = tau / g.k();
            long t0 = static_cast<long>(std::floor(pt));
            double wt = pt - static_cast<double>(t0);
            std::vector<double> Wt(static_cast<std::size_t>(d));
            for (int j = 0; j < d; ++j) {
                double w0 = W[static_cast<std::size_t>((t0 % g.n_t) * d + j)];
                double w1 = W[static_cast<std::size_t>(((t0 + 1) % g.n_t) * d + j)];
                if ((t0 + 1) % g.n_t == 0) w1 = 0.0;
                Wt[static_cast<std::size_t>(j)] = (1.0 - wt) * w0 + wt * w1;
            }
            for (std::size_t p = 0; p < total; ++p) {
                std::size_t rest = p;
                double r2 = 0.0;
                for (int j = d - 1; j >= 0; --j) {
                    double y = -R + (static_cast<double>(rest % static_cast<std::size_t>(nx)) + 0.5) * hx;
                    rest /= static_cast<std::size_t>(nx);
                    r2 += y * y;
                    double zz = std::fmod(y / eps - Wt[static_cast<std::size_t>(j)], g.L);
                    if (zz < 0) zz += g.L;
                    double pz = zz / g.h();
                    ix[static_cast<std::size_t>(j)] = static_cast<long>(std::floor(pz));
                    wx[static_cast<std::size_t>(j)] = pz - static_cast<double>(ix[static_cast<std::size_t>(j)]);
                }
                if (r2 > R * R) continue;
                double val = 0.0;
                for (int mask = 0; mask < (1 << (d + 1)); ++mask) {
                    double w = (mask & 1) ? wt : 1.0 - wt;
                    for (int j = 0; j < d; ++j) {
                        int bit = (mask >> (j + 1)) & 1;
                        w *= bit ? wx[static_cast<std::size_t>(j)] : 1.0 - wx[static_cast<std::size_t>(j)];
                        corner[static_cast<std::size_t>(j)] = ix[static_cast<std::size_t>(j)] + bit;
                    }
                    if (w != 0.0) val += w * cf.phi[g.index(t0 + (mask & 1), corner.data())];
                }
                val *= eps;
                sum += val;
                sum_sq += val * val;
                volume += 1.0;
            }
        }
        double cell = ht;
        for (int j = 0; j < d; ++j) cell *= hx;
        const double mean = volume > 0 ? sum / volume : 0.0;
        rows.push_back({eps, std::max(0.0, (sum_sq - volume * mean * mean)) * cell});
    }
    return rows;
}

std::vector<SublinearityRow> sublinearity_diagnostic(const EnvironmentRealization& env,
                                                     std::span<const double> direction,
                                                     const std::vector<double>& eps_list, double R, double delta,
                                                     bool transpose) {
    CorrectorProblem p{&env, std::vector<double>(direction.begin(), direction.end()), delta, transpose};
    CorrectorField cf = solve_corrector(p);
    return sublinearity_diagnostic(cf, env, eps_list, R);
}

double extrapolate_to_zero(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> p = y;
    const std::size_t n = x.size();
    for (std::size_t level = 1; level < n; ++level)
        for (std::size_t i = 0; i + level < n; ++i)
            p[i] = (x[i] * p[i + 1] - x[i + level] * p[i]) / (x[i] - x[i + level]);
    return p[0];
}

EffectiveMatrix delta_extrapolation(const EnvironmentRealization& env, const std::vector<double>& delta_list,
                                    const GmresOptions& opts) {
    if (delta_list.size() < 3) throw ValidationError("delta_extrapolation: need at least 3 deltas");
    for (std::size_t i = 0; i < delta_list.size(); ++i) {
        if (!(delta_list[i] > 0.0)) throw ValidationError("delta_extrapolation: deltas must be positive");
        if (i > 0 && !(delta_list[i] < delta_list[i - 1]))
            throw ValidationError("delta_extrapolation: delta_list must be strictly decreasing");
    }
    const int d = env.grid.d;
    std::vector<EffectiveMatrix> raw;
    for (double delta : delta_list) raw.push_back(effective_matrix(env, delta, opts));
    EffectiveMatrix out = raw.back();
    out.delta = 0.0;
    out.delta_sequence = delta_list;
    for (const auto& r : raw) {
        out.raw_a_bar.push_back(r.a_bar);
        out.raw_m_bar.push_back(r.m_bar);
    }
    for (int c = 0; c < d * d; ++c) {
        std::vector<double> ya, ym;
        for (const auto& r : raw) {
            ya.push_back(r.a_bar[static_cast<std::size_t>(c)]);
            ym.push_back(r.m_bar[static_cast<std::size_t>(c)]);
        }
        out.a_bar[static_cast<std::size_t>(c)] = extrapolate_to_zero(delta_list, ya);
        out.m_bar[static_cast<std::size_t>(c)] = extrapolate_to_zero(delta_list, ym);
    }
    double prev = INFINITY;
    for (std::size_t k = 1; k < raw.size(); ++k) {
        double diff = 0.0;
        for (int c = 0; c < d * d; ++c)
            diff = std::max(diff, std::abs(raw[k].a_bar[static_cast<std::size_t>(c)] - raw[k - 1].a_bar[static_cast<std::size_t>(c)]));
        if (diff > prev && diff > 1e-12) out.warnings.push_back("NonMonotone: a_bar increments do not shrink along delta_list");
        prev = diff;
    }
    out.lambda_min = sym_eigenvalues(d, out.a_bar.data()).front();
    out.duality_gap = 0.0;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            out.duality_gap = std::max(out.duality_gap, std::abs(out.a_bar[static_cast<std::size_t>(i * d + j)] - out.m_bar[static_cast<std::size_t>(j * d + i)]));
    return out;
}

}  // namespace dh
