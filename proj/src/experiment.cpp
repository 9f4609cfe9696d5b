#include "dh/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numbers>
#include <set>
#include <thread>

#include <Eigen/Dense>

#include "dh/errors.hpp"
#include "dh/kernels.hpp"
#include "dh/path_clt.hpp"
#include "dh/rng.hpp"
#include "dh/stats.hpp"

namespace dh {

EnvKind parse_env_kind(const std::string& s) {
    if (s == "random") return EnvKind::random;
    if (s == "trivial") return EnvKind::trivial;
    if (s == "laminate") return EnvKind::laminate;
    throw ValidationError("unknown environment kind '" + s + "' (random, trivial, laminate)");
}

std::string to_string(EnvKind k) {
    switch (k) {
        case EnvKind::random: return "random";
        case EnvKind::trivial: return "trivial";
        case EnvKind::laminate: return "laminate";
    }
    return "?";
}

DriftSource parse_drift_source(const std::string& s) {
    if (s == "torus") return DriftSource::torus;
    if (s == "series") return DriftSource::series;
    throw ValidationError("unknown drift source '" + s + "' (torus, series)");
}

std::string to_string(DriftSource s) { return s == DriftSource::torus ? "torus" : "series"; }

void ExperimentConfig::validate() const {
    grid.validate();
    params.validate(grid.d);
    bbar.validate();
    domain.validate();
    if (domain.d != grid.d) throw ValidationError("domain dimension must match the grid dimension");
    if (!(T > 0.0)) throw ValidationError("T must be positive");
    if (!(dt > 0.0)) throw ValidationError("dt must be positive");
    if (n_snapshots < 1) throw ValidationError("n_snapshots must be >= 1");
    if (eps_list.empty()) throw ValidationError("eps_list must not be empty");
    for (std::size_t i = 0; i < eps_list.size(); ++i) {
        if (!(eps_list[i] > 0.0 && eps_list[i] <= 1.0)) throw ValidationError("eps_list entries must lie in (0, 1]");
        if (i > 0 && !(eps_list[i] < eps_list[i - 1])) throw ValidationError("eps_list must be strictly decreasing");
    }
    if (ensemble < 1) throw ValidationError("ensemble must be >= 1");
    if (delta_list.size() < 3) throw ValidationError("delta_list needs at least 3 entries for the extrapolation");
    for (std::size_t i = 0; i < delta_list.size(); ++i) {
        if (!(delta_list[i] > 0.0)) throw ValidationError("delta_list entries must be positive");
        if (i > 0 && !(delta_list[i] < delta_list[i - 1])) throw ValidationError("delta_list must be strictly decreasing");
    }
    if (!(gmres_tol > 0.0)) throw ValidationError("gmres_tol must be positive");
    if (!(series_dt > 0.0)) throw ValidationError("series_dt must be positive");
    if (permutations < 1) throw ValidationError("permutations must be >= 1");
    if (workers < 1) throw ValidationError("workers must be >= 1");
}

ProbeSet standard_probes(const SimDomain& dom) {
    static const double offsets[5][2] = {{0.0, 0.0}, {0.1, 0.0}, {0.0, -0.1}, {-0.12, 0.08}, {0.05, 0.12}};
    static const double widths[5] = {0.08, 0.05, 0.06, 0.1, 0.07};
    ProbeSet p;
    for (int k = 0; k < 5; ++k) {
        std::vector<double> c(static_cast<std::size_t>(dom.d), 0.5 * dom.L_sim);
        c[0] += offsets[k][0] * dom.L_sim;
        c[1] += offsets[k][1] * dom.L_sim;
        p.chi.push_back(gaussian_bump(dom, c, widths[k] * dom.L_sim));
    }
    return p;
}

std::vector<double> probe_vector(const SimDomain& dom, const ProbeSet& probes, const Field& u) {
    std::vector<double> v;
    for (const auto& chi : probes.chi) v.push_back(inner(dom, u, chi));
    return v;
}

double law_distance(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
    if (a.empty() || b.empty()) throw ValidationError("law_distance: samples must be nonempty");
    const std::size_t p = a.front().size();
    std::vector<double> fa, fb;
    for (const auto& v : a) {
        if (v.size() != p) throw DimensionMismatch("law_distance: ragged sample");
        fa.insert(fa.end(), v.begin(), v.end());
    }
    for (const auto& v : b) {
        if (v.size() != p) throw DimensionMismatch("law_distance: dimensions differ");
        fb.insert(fb.end(), v.begin(), v.end());
    }
    return energy_distance(fa, fb, static_cast<int>(p));
}

EnvironmentRealization make_environment(const ExperimentConfig& cfg, int realization) {
    const std::uint64_t s = derive_seed(cfg.seed, "environment", static_cast<std::uint64_t>(realization));
    EnvironmentRealization env;
    switch (cfg.env_kind) {
        case EnvKind::random: env = build_environment(cfg.grid, cfg.params, s, cfg.bbar); break;
        case EnvKind::trivial: env = trivial_environment(cfg.grid, cfg.params.lambda); break;
        case EnvKind::laminate: {
            const double lo = cfg.params.lambda, hi = cfg.params.Lambda, L = cfg.grid.L;
            env = laminate_environment(cfg.grid, [lo, hi, L](double x) {
                return lo + (hi - lo) * 0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * x / L));
            });
            break;
        }
    }
    env.seed = s;
    return env;
}

namespace {

std::vector<double> matrix_sqrt(int d, const std::vector<double>& m) {
    Eigen::MatrixXd a(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = 0.5 * (m[static_cast<std::size_t>(i * d + j)] + m[static_cast<std::size_t>(j * d + i)]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    Eigen::MatrixXd r = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
    std::vector<double> out(static_cast<std::size_t>(d * d));
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(i * d + j)] = r(i, j);
    return out;
}

DriftPath drift_path_for(const ExperimentConfig& cfg, const EnvironmentRealization& env, double eps, int r) {
    if (cfg.drift_source == DriftSource::torus) return transport_path(env, eps, cfg.T);
    TemporalSeries s = bbar_series(cfg.bbar, cfg.grid.d, cfg.T / (eps * eps) + cfg.series_dt, cfg.series_dt,
                                   derive_seed(cfg.seed, "drift-series", static_cast<std::uint64_t>(r)));
    return integrate_path(s, eps, cfg.T, eps * eps * cfg.series_dt);
}

struct JobResult {
    RealizationRecord record;
    std::vector<double> err, rel, sup_w;
    std::vector<std::vector<double>> probes_eps;
    std::vector<double> probes_limit;
    std::vector<std::string> warnings;
    bool done = false;
    std::string error;
    double t_corrector = 0.0, t_pde = 0.0;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void run_job(const ExperimentConfig& cfg, const ProbeSet& probes, const std::vector<double>& sigma,
             const CauchyData& data, int r, JobResult& out) {
    auto t0 = std::chrono::steady_clock::now();
    EnvironmentRealization env = make_environment(cfg, r);
    EffectiveMatrix em = delta_extrapolation(env, cfg.delta_list, cfg.gmres_tol);
    out.record.index = r;
    out.record.seed = env.seed;
    out.record.a_bar = em.a_bar;
    out.record.lambda_min = em.lambda_min;
    out.record.duality_gap = em.duality_gap;
    out.record.corrector_residuals = em.residuals;
    out.record.corrector_iterations = em.iterations;
    for (const auto& w : em.warnings) out.warnings.push_back(w);
    out.t_corrector = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    SolveOptions opts;
    opts.dt = cfg.dt;
    opts.n_snapshots = cfg.n_snapshots;
    opts.unshift = false;
    const int d = cfg.grid.d;
    for (double eps : cfg.eps_list) {
        DriftPath w = drift_path_for(cfg, env, eps, r);
        SolutionField rt = solve_transported_pde(env, eps, data, w, opts);
        SolutionField lt = solve_limit_coupled(em.a_bar, w, data, opts);
        const double e = spacetime_l2_difference(rt, lt);
        const double nrm = spacetime_l2(lt);
        out.err.push_back(e);
        out.rel.push_back(nrm > 0.0 ? e / nrm : 0.0);
        double sup = 0.0;
        for (std::size_t n = 0; n < w.times.size(); ++n) {
            double s2 = 0.0;
            for (int i = 0; i < d; ++i) s2 += w.value(n, i) * w.value(n, i);
            sup = std::max(sup, std::sqrt(s2));
        }
        out.sup_w.push_back(sup);
        std::vector<double> wT(static_cast<std::size_t>(d));
        for (int i = 0; i < d; ++i) wT[static_cast<std::size_t>(i)] = w.at(cfg.T, i);
        Field phys = spectral_shift(cfg.domain, rt.final(), wT);
        out.probes_eps.push_back(probe_vector(cfg.domain, probes, phys));
        for (const auto& m : rt.warnings) out.warnings.push_back(m);
    }
    SolveOptions lo;
    lo.dt = cfg.dt;
    lo.n_snapshots = 1;
    lo.unshift = true;
    SolutionField lim = solve_limit_spde(em.a_bar, sigma, data,
                                         derive_seed(cfg.seed, "limit-brownian", static_cast<std::uint64_t>(r)), lo);
    out.probes_limit = probe_vector(cfg.domain, probes, lim.final());
    out.t_pde = seconds_since(t0);
    out.done = true;
}

void assemble(const ExperimentConfig& cfg, std::vector<JobResult>& jobs, ConvergenceReport& rep) {
    std::set<std::string> warn;
    for (auto& j : jobs) {
        if (!j.done) continue;
        rep.realizations.push_back(j.record);
        for (auto& w : j.warnings) warn.insert(w);
    }
    for (std::size_t e = 0; e < cfg.eps_list.size(); ++e) {
        EpsRecord er;
        er.eps = cfg.eps_list[e];
        for (auto& j : jobs) {
            if (!j.done) continue;
            er.pathwise_error.push_back(j.err[e]);
            er.pathwise_relative.push_back(j.rel[e]);
            er.sup_w.push_back(j.sup_w[e]);
            er.probes_eps.push_back(j.probes_eps[e]);
            er.probes_limit.push_back(j.probes_limit);
        }
        if (!er.pathwise_error.empty()) {
            double s = 0.0;
            for (double v : er.pathwise_error) s += v;
            er.pathwise_mean = s / static_cast<double>(er.pathwise_error.size());
            er.law_distance = law_distance(er.probes_eps, er.probes_limit);
            const std::size_t P = er.probes_eps.front().size();
            for (std::size_t k = 0; k < P; ++k) {
                std::vector<std::vector<double>> a, b;
                for (auto& v : er.probes_eps) a.push_back({v[k]});
                for (auto& v : er.probes_limit) b.push_back({v[k]});
                er.law_distance_per_probe.push_back(law_distance(a, b));
            }
            std::vector<double> fa, fb;
            for (auto& v : er.probes_eps) fa.insert(fa.end(), v.begin(), v.end());
            for (auto& v : er.probes_limit) fb.insert(fb.end(), v.begin(), v.end());
            auto pt = energy_permutation_test(fa, fb, static_cast<int>(P), cfg.permutations,
                                              derive_seed(cfg.seed, "permutation", e), 0.01);
            er.permutation_p = pt.p_value;
            er.permutation_threshold = pt.threshold;
        }
        rep.per_eps.push_back(std::move(er));
    }
    rep.warnings.assign(warn.begin(), warn.end());
    double tc = 0.0, tp = 0.0;
    for (auto& j : jobs) {
        tc += j.t_corrector;
        tp += j.t_pde;
    }
    rep.timings.push_back({"corrector_total", tc});
    rep.timings.push_back({"pde_total", tp});
}

}  // namespace

ConvergenceReport homogenization_run(const ExperimentConfig& cfg,
                                     const std::function<void(const ConvergenceReport&)>& on_partial) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();
    ConvergenceReport rep;
    const int d = cfg.grid.d;
    if (cfg.drift_source == DriftSource::series)
        rep.sigma = matrix_sqrt(d, analytic_sigma_sq(cfg.bbar, d));
    else
        rep.sigma.assign(static_cast<std::size_t>(d * d), 0.0);
    const ProbeSet probes = standard_probes(cfg.domain);
    const CauchyData data = make_cauchy_data(cfg.domain, cfg.T, cfg.data);

    std::vector<JobResult> jobs(static_cast<std::size_t>(cfg.ensemble));
    const int workers = std::min(cfg.workers, cfg.ensemble);
    const int saved_threads = kernels::threads();
    if (workers > 1) kernels::set_threads(1);
    std::atomic<int> next{0};
    auto worker = [&] {
        for (;;) {
            const int r = next.fetch_add(1);
            if (r >= cfg.ensemble) return;
            try {
                run_job(cfg, probes, rep.sigma, data, r, jobs[static_cast<std::size_t>(r)]);
            } catch (const std::exception& e) {
                jobs[static_cast<std::size_t>(r)].error = e.what();
            }
        }
    };
    if (workers > 1) {
        std::vector<std::thread> pool;
        for (int k = 0; k < workers; ++k) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
        kernels::set_threads(saved_threads);
    } else {
        worker();
    }

    int failed = -1;
    for (int r = 0; r < cfg.ensemble; ++r)
        if (!jobs[static_cast<std::size_t>(r)].done) {
            failed = r;
            break;
        }
    if (failed >= 0) {
        rep.status = "partial";
        rep.error = "realization " + std::to_string(failed) + ": " + jobs[static_cast<std::size_t>(failed)].error;
        try {
            assemble(cfg, jobs, rep);
        } catch (const std::exception&) {
        }
        if (on_partial) on_partial(rep);
        throw Error("experiment", rep.error);
    }
    assemble(cfg, jobs, rep);
    rep.timings.push_back({"wall", seconds_since(t_start)});
    return rep;
}

ResidualPair perturbed_test_residual(const EnvironmentRealization& env, const ResidualConfig& rc) {
    const SimDomain& dom = rc.data.domain;
    const int d = env.grid.d;
    if (rc.direction < 0 || rc.direction >= d) throw ValidationError("perturbed_test_residual: direction out of range");
    if (!(rc.eps > 0.0) || !(rc.delta > 0.0)) throw ValidationError("perturbed_test_residual: eps and delta must be positive");
    if (dom.d != d) throw DimensionMismatch("perturbed_test_residual: dimension");
    const double eps = rc.eps;
    std::vector<double> abar = rc.a_bar;
    if (abar.empty()) abar = effective_matrix(env, rc.delta).a_bar;
    if (abar.size() != static_cast<std::size_t>(d * d)) throw DimensionMismatch("perturbed_test_residual: a_bar size");

    std::vector<Field> comps;
    for (int k = 0; k < d; ++k) {
        CorrectorProblem p;
        p.env = &env;
        p.direction.assign(static_cast<std::size_t>(d), 0.0);
        p.direction[static_cast<std::size_t>(k)] = 1.0;
        p.delta = rc.delta;
        p.transpose = true;
        CorrectorField cf = solve_corrector(p);
        comps.push_back(cf.phi);
        for (int j = 0; j < d; ++j) comps.push_back(cf.grad_phi[static_cast<std::size_t>(j)]);
    }
    TorusSampler corr(env.grid, eps, dom, std::move(comps));
    TorusSampler coef = coefficient_sampler(env, eps, dom, false);

    DriftPath w = transport_path(env, eps, rc.data.T);
    SolveOptions opts = rc.opts;
    opts.unshift = false;
    SolutionField rho = solve_transported_pde(env, eps, rc.data, w, opts);
    SolutionField u = solve_limit_coupled(abar, w, rc.data, opts);

    SpatialFFT fft(d, dom.m_x, dom.L_sim);
    const std::size_t N = dom.size();
    Field psi = preset_field(dom, rc.psi);
    VectorField gpsi = spectral_gradient(fft, 1, psi);
    std::vector<VectorField> hpsi;
    for (int k = 0; k < d; ++k) hpsi.push_back(spectral_gradient(fft, 1, gpsi[static_cast<std::size_t>(k)]));

    const double cell = std::pow(dom.h(), d);
    const int i = rc.direction;
    double plain = 0.0, corrected = 0.0, dterm = 0.0, fnorm2 = 0.0;
    std::vector<Field> C, Phi;
    std::vector<double> shift(static_cast<std::size_t>(d));
    for (std::size_t q = 0; q < rho.times.size(); ++q) {
        const double t = rho.times[q];
        double wq;
        if (rho.times.size() == 1)
            wq = 0.0;
        else if (q == 0)
            wq = 0.5 * (rho.times[1] - rho.times[0]);
        else if (q + 1 == rho.times.size())
            wq = 0.5 * (rho.times[q] - rho.times[q - 1]);
        else
            wq = 0.5 * (rho.times[q + 1] - rho.times[q - 1]);
        for (int j = 0; j < d; ++j) shift[static_cast<std::size_t>(j)] = w.at(t, j);
        coef.sample(t, shift, C);
        corr.sample(t, shift, Phi);
        VectorField gu = spectral_gradient(fft, 1, u.rho[q]);
        double sp = 0.0, sc = 0.0, sd = 0.0, sf = 0.0;
#pragma omp parallel for schedule(static) reduction(+ : sp, sc, sd, sf) num_threads(kernels::threads())
        for (std::size_t n = 0; n < N; ++n) {
            double cu[3], au[3], gchi[3];
            for (int r = 0; r < d; ++r) {
                cu[r] = 0.0;
                au[r] = 0.0;
                for (int c = 0; c < d; ++c) {
                    cu[r] += C[static_cast<std::size_t>(r * d + c)][n] * gu[static_cast<std::size_t>(c)][n];
                    au[r] += abar[static_cast<std::size_t>(r * d + c)] * gu[static_cast<std::size_t>(c)][n];
                }
            }
            for (int j = 0; j < d; ++j) {
                double v = gpsi[static_cast<std::size_t>(j)][n];
                for (int k = 0; k < d; ++k) {
                    const std::size_t base = static_cast<std::size_t>(k * (d + 1));
                    v += Phi[base + 1 + static_cast<std::size_t>(j)][n] * gpsi[static_cast<std::size_t>(k)][n] +
                         eps * Phi[base][n] * hpsi[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)][n];
                }
                gchi[j] = v;
            }
            for (int j = 0; j < d; ++j) {
                sp += (cu[j] - au[j]) * gpsi[static_cast<std::size_t>(j)][n];
                sc += cu[j] * gchi[j] - au[j] * gpsi[static_cast<std::size_t>(j)][n];
            }
            const double F = rho.rho[q][n] * gpsi[static_cast<std::size_t>(i)][n];
            sd += Phi[static_cast<std::size_t>(i * (d + 1))][n] * F;
            sf += F * F;
        }
        plain += wq * cell * sp;
        corrected += wq * cell * sc;
        dterm += wq * cell * sd;
        fnorm2 += wq * cell * sf;
    }
    ResidualPair out;
    out.plain = std::abs(plain);
    out.corrected = std::abs(corrected);
    out.delta_term = rc.delta * std::abs(dterm);
    // delta <phi^2> <= <|(a - s) e_i|^2> / (4 lambda) for the transpose corrector.
    double ce2 = 0.0;
    const std::size_t G = env.grid.size();
    for (std::size_t n = 0; n < G; ++n)
        for (int r = 0; r < d; ++r) {
            const double v = env.a.at(r, i)[n] - env.s.at(r, i)[n];
            ce2 += v * v;
        }
    ce2 /= static_cast<double>(G);
    const double volume = std::pow(dom.L_sim, d) * rc.data.T;
    out.delta_bound = std::sqrt(ce2 / (4.0 * env.params.lambda) * volume * fnorm2);
    return out;
}

}  // namespace dh
