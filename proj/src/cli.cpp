#include "dh/cli.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Dense>

#include "dh/corrector.hpp"
#include "dh/errors.hpp"
#include "dh/field_io.hpp"
#include "dh/path_clt.hpp"
#include "dh/pde_solver.hpp"
#include "dh/rng.hpp"
#include "dh/stream_solver.hpp"

namespace dh {

using json = nlohmann::ordered_json;

const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> s = {"generate-env", "stream-recover", "solve-corrector", "effective-matrix",
                                               "clt",          "solve-eps",      "solve-limit",     "homogenize"};
    return s;
}

namespace {

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json grid_json(const SpaceTimeGrid& g) {
    return {{"d", g.d}, {"n_x", g.n_x}, {"n_t", g.n_t}, {"L", g.L}, {"T_env", g.T_env}};
}

EnvironmentRealization load_or_make(const RunConfig& cfg, int r = 0) {
    if (!cfg.env_file.empty()) return load_environment(cfg.env_file);
    return make_environment(cfg.exp, r);
}

std::vector<std::vector<double>> directions(const RunConfig& cfg, int d) {
    if (!cfg.direction.empty()) return {cfg.direction};
    std::vector<std::vector<double>> out;
    for (int i = 0; i < d; ++i) {
        std::vector<double> e(static_cast<std::size_t>(d), 0.0);
        e[static_cast<std::size_t>(i)] = 1.0;
        out.push_back(e);
    }
    return out;
}

std::vector<double> sqrt_psd(int d, const std::vector<double>& m) {
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

json effective_json(const EffectiveMatrix& em) {
    json j;
    j["a_bar"] = em.a_bar;
    j["m_bar"] = em.m_bar;
    j["lambda_min"] = em.lambda_min;
    j["upper_certificate"] = em.upper_cert;
    j["duality_gap"] = em.duality_gap;
    j["delta"] = em.delta;
    j["delta_sequence"] = em.delta_sequence;
    j["raw_a_bar"] = em.raw_a_bar;
    j["raw_m_bar"] = em.raw_m_bar;
    j["residuals"] = em.residuals;
    j["iterations"] = em.iterations;
    j["warnings"] = em.warnings;
    return j;
}

json solution_json(const SolutionField& s) {
    json j;
    j["formulation"] = to_string(s.formulation);
    j["frame"] = s.frame;
    j["times"] = s.times;
    j["norms"] = {{"max_l2_sq", s.max_l2_sq},         {"grad_sq_integral", s.grad_sq_integral},
                  {"linf", s.linf},                   {"g_linf", s.g_linf},
                  {"f_linf", s.f_linf},               {"spacetime_l2", spacetime_l2(s)}};
    j["mass"] = {{"initial", s.mass_initial}, {"final", s.mass_final}};
    j["energy"] = {{"lhs", s.energy_lhs}, {"rhs", s.energy_rhs}, {"constant", s.energy_constant}, {"ok", s.energy_ok}};
    j["boundary_mass_fraction"] = s.boundary_mass_fraction;
    j["steps"] = s.steps;
    j["mu"] = s.mu;
    j["warnings"] = s.warnings;
    return j;
}

void write_solution(OutputRegistry& reg, const std::string& name, const SolutionField& s, std::uint64_t seed) {
    Container c;
    c.header.d = s.domain.d;
    c.header.n_x = s.domain.m_x;
    c.header.n_t = static_cast<int>(s.times.size());
    c.header.L = s.domain.L_sim;
    c.header.T_env = s.times.empty() ? 0.0 : s.times.back();
    c.header.seed = seed;
    NamedArray rho;
    rho.name = "rho";
    rho.components = static_cast<std::uint32_t>(s.rho.size());
    rho.values = s.domain.size();
    for (const auto& f : s.rho) rho.data.insert(rho.data.end(), f.begin(), f.end());
    c.arrays.push_back(std::move(rho));
    c.arrays.push_back(pack_field("times", s.times));
    write_container(reg.path(name), c);
    reg.record(name, "field");
}

void cmd_generate_env(const RunConfig& cfg, OutputRegistry& reg) {
    json summary = json::array();
    for (int r = 0; r < cfg.exp.ensemble; ++r) {
        EnvironmentRealization env = make_environment(cfg.exp, r);
        char name[64];
        std::snprintf(name, sizeof name, "environment_%03d.dhf", r);
        save_environment(reg.path(name), env);
        reg.record(name, "field");
        const int d = env.grid.d;
        double lo = 1e300, hi = 0.0;
        std::vector<double> m(static_cast<std::size_t>(d * d));
        for (std::size_t q = 0; q < env.grid.size(); ++q) {
            for (int k = 0; k < d * d; ++k) m[static_cast<std::size_t>(k)] = env.a.c[static_cast<std::size_t>(k)][q];
            auto ev = sym_eigenvalues(d, m.data());
            lo = std::min(lo, ev.front());
            hi = std::max(hi, ev.back());
        }
        summary.push_back({{"realization", r}, {"file", name}, {"seed", env.seed}, {"a_min_eigenvalue", lo},
                           {"a_max_eigenvalue", hi}});
    }
    json j;
    j["grid"] = grid_json(cfg.exp.grid);
    j["env_kind"] = to_string(cfg.exp.env_kind);
    j["bbar_model"] = to_string(cfg.exp.bbar.model);
    j["realizations"] = summary;
    reg.write_text("environment.json", "report", dump(j));
}

void cmd_stream_recover(const RunConfig& cfg, OutputRegistry& reg) {
    EnvironmentRealization env = load_or_make(cfg);
    VectorField b = drift_of(env);
    StreamRecovery sr = cfg.stream_alpha > 0.0 ? solve_stream_regularized(b, env.grid, cfg.stream_alpha)
                                               : solve_stream_matrix(b, env.grid);
    Container c;
    c.header.d = env.grid.d;
    c.header.n_x = env.grid.n_x;
    c.header.n_t = env.grid.n_t;
    c.header.L = env.grid.L;
    c.header.T_env = env.grid.T_env;
    c.header.seed = env.seed;
    c.arrays.push_back(pack_matrix("s_rec", sr.s_rec));
    write_container(reg.path("stream.dhf"), c);
    reg.record("stream.dhf", "field");
    json j;
    j["alpha"] = sr.alpha;
    j["residual"] = sr.residual;
    j["relative_residual"] = sr.relative_residual;
    j["relative_divergence_input"] = relative_divergence(b, env.grid);
    j["warnings"] = sr.warnings;
    reg.write_text("stream_report.json", "report", dump(j));
}

void cmd_solve_corrector(const RunConfig& cfg, OutputRegistry& reg) {
    EnvironmentRealization env = load_or_make(cfg);
    const int d = env.grid.d;
    GmresOptions o;
    o.tol = cfg.exp.gmres_tol;
    json runs = json::array();
    Container c;
    c.header.d = d;
    c.header.n_x = env.grid.n_x;
    c.header.n_t = env.grid.n_t;
    c.header.L = env.grid.L;
    c.header.T_env = env.grid.T_env;
    c.header.seed = env.seed;
    int idx = 0;
    for (const auto& dir : directions(cfg, d)) {
        for (bool tr : {false, true}) {
            CorrectorProblem p{&env, dir, cfg.delta, tr};
            CorrectorField cf = solve_corrector(p, o);
            runs.push_back({{"direction", dir},
                            {"transpose", tr},
                            {"delta", cf.delta},
                            {"iterations", cf.iterations},
                            {"residual", cf.residual_norm},
                            {"energy_defect", energy_check(cf, env, dir)}});
            c.arrays.push_back(pack_field(std::string(tr ? "phi_t_" : "phi_") + std::to_string(idx), cf.phi));
        }
        ++idx;
    }
    write_container(reg.path("corrector.dhf"), c);
    reg.record("corrector.dhf", "field");
    json j;
    j["grid"] = grid_json(env.grid);
    j["solves"] = runs;
    reg.write_text("corrector.json", "report", dump(j));
}

EffectiveMatrix effective_for(const RunConfig& cfg, const EnvironmentRealization& env) {
    if (cfg.exp.delta_list.size() >= 3) return delta_extrapolation(env, cfg.exp.delta_list, cfg.exp.gmres_tol);
    return effective_matrix(env, cfg.delta, cfg.exp.gmres_tol);
}

void cmd_effective_matrix(const RunConfig& cfg, OutputRegistry& reg) {
    EnvironmentRealization env = load_or_make(cfg);
    EffectiveMatrix em = effective_for(cfg, env);
    json j = effective_json(em);
    j["grid"] = grid_json(env.grid);
    j["seed"] = env.seed;
    reg.write_text("effective_matrix.json", "report", dump(j));
}

void cmd_clt(const RunConfig& cfg, OutputRegistry& reg) {
    const auto& e = cfg.exp;
    const int d = e.grid.d;
    std::ostringstream csv;
    csv << "eps,statistic,i,j,value,std_error\n";
    auto rows = [&](const std::string& eps, const std::string& stat, const std::vector<double>& v,
                    const std::vector<double>& se) {
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                const std::size_t k = static_cast<std::size_t>(i * d + j);
                csv << eps << "," << stat << "," << i << "," << j << "," << g17(v[k]) << ","
                    << (se.empty() ? std::string() : g17(se[k])) << "\n";
            }
    };
    json j;
    const auto analytic = analytic_sigma_sq(e.bbar, d);
    rows("", "analytic", analytic, {});
    j["analytic"] = analytic;

    std::vector<BlockIncrements> blocks;
    for (int p = 0; p < cfg.paths; ++p) {
        TemporalSeries s = bbar_series(e.bbar, d, cfg.horizon, e.series_dt, derive_seed(e.seed, "clt-block", static_cast<std::uint64_t>(p)));
        blocks.push_back(block_increments(s, cfg.horizon));
    }
    CovarianceEstimate series = estimate_sigma_series(blocks, cfg.lag_max);
    rows("", "series", series.sigma_sq, series.std_error);
    j["series"] = {{"sigma_sq", series.sigma_sq}, {"std_error", series.std_error}, {"tail", series.tail},
                   {"truncation", series.truncation}, {"warnings", series.warnings}};
    json per = json::array();
    for (double eps : e.eps_list) {
        std::vector<DriftPath> paths;
        for (int p = 0; p < cfg.paths; ++p) {
            TemporalSeries s = bbar_series(e.bbar, d, e.T / (eps * eps) + e.series_dt, e.series_dt,
                                           derive_seed(e.seed, "clt-path", static_cast<std::uint64_t>(p)));
            paths.push_back(integrate_path(s, eps, e.T, eps * eps * e.series_dt));
        }
        CovarianceEstimate emp = empirical_sigma(paths, e.T);
        const std::vector<double> times = {0.25 * e.T, 0.5 * e.T, 0.75 * e.T, e.T};
        DonskerReport dr = donsker_test(paths, series.sigma_sq, times);
        rows(g17(eps), "empirical", emp.sigma_sq, emp.std_error);
        csv << g17(eps) << ",donsker_min_p,,," << g17(dr.min_pvalue) << ",\n";
        per.push_back({{"eps", eps},
                       {"empirical", emp.sigma_sq},
                       {"empirical_std_error", emp.std_error},
                       {"donsker", {{"verdict", dr.verdict}, {"min_pvalue", dr.min_pvalue}, {"tests", dr.tests}}}});
    }
    j["per_eps"] = per;
    reg.write_text("clt.csv", "csv", csv.str());
    reg.write_text("clt.json", "report", dump(j));
}

void cmd_solve_eps(const RunConfig& cfg, OutputRegistry& reg) {
    EnvironmentRealization env = load_or_make(cfg);
    const auto& e = cfg.exp;
    CauchyData data = make_cauchy_data(e.domain, e.T, e.data);
    SolveOptions o;
    o.dt = e.dt;
    o.n_snapshots = e.n_snapshots;
    json runs = json::array();
    for (std::size_t k = 0; k < e.eps_list.size(); ++k) {
        const double eps = e.eps_list[k];
        SolutionField s = cfg.formulation == "direct" ? solve_epsilon_pde(env, eps, data, o)
                                                      : solve_transported_pde(env, eps, data, o);
        const std::string name = "solve_eps_" + std::to_string(k) + ".dhf";
        write_solution(reg, name, s, env.seed);
        json sj = solution_json(s);
        sj["eps"] = eps;
        sj["file"] = name;
        runs.push_back(sj);
    }
    reg.write_text("solve_eps.json", "report", dump(json{{"runs", runs}}));
}

void cmd_solve_limit(const RunConfig& cfg, OutputRegistry& reg) {
    const auto& e = cfg.exp;
    const int d = e.grid.d;
    std::vector<double> abar = cfg.a_bar;
    if (abar.empty()) abar = effective_for(cfg, load_or_make(cfg)).a_bar;
    std::vector<double> sigma = cfg.sigma;
    if (sigma.empty()) sigma = sqrt_psd(d, analytic_sigma_sq(e.bbar, d));
    CauchyData data = make_cauchy_data(e.domain, e.T, e.data);
    SolveOptions o;
    o.dt = e.dt;
    o.n_snapshots = e.n_snapshots;
    SolutionField s = solve_limit_spde(abar, sigma, data, derive_seed(e.seed, "limit-brownian", 0), o);
    write_solution(reg, "limit.dhf", s, e.seed);
    json j = solution_json(s);
    j["a_bar"] = abar;
    j["sigma"] = sigma;
    reg.write_text("limit.json", "report", dump(j));
}

void cmd_homogenize(const RunConfig& cfg, OutputRegistry& reg) {
    const std::string hash = config_hash(cfg);
    auto partial = [&](const ConvergenceReport& rep) {
        reg.write_text("report_partial.json", "report", report_json(rep, hash));
        reg.write_text("report_partial.csv", "csv", report_csv(rep));
    };
    ConvergenceReport rep = homogenization_run(cfg.exp, partial);
    reg.write_text("report.json", "report", report_json(rep, hash));
    reg.write_text("report.csv", "csv", report_csv(rep));
    json t;
    for (const auto& [k, v] : rep.timings) t[k] = v;
    reg.write_text("timing.json", "timing", dump(t));
}

}  // namespace

std::string report_json(const ConvergenceReport& rep, const std::string& hash) {
    json j;
    j["schema_version"] = rep.schema_version;
    j["status"] = rep.status;
    if (!rep.error.empty()) j["error"] = rep.error;
    j["config_hash"] = hash;
    j["sigma"] = rep.sigma;
    json rs = json::array();
    for (const auto& r : rep.realizations)
        rs.push_back({{"index", r.index},
                      {"seed", r.seed},
                      {"a_bar", r.a_bar},
                      {"lambda_min", r.lambda_min},
                      {"duality_gap", r.duality_gap},
                      {"corrector_residuals", r.corrector_residuals},
                      {"corrector_iterations", r.corrector_iterations}});
    j["realizations"] = rs;
    json pe = json::array();
    for (const auto& e : rep.per_eps)
        pe.push_back({{"eps", e.eps},
                      {"pathwise_error", e.pathwise_error},
                      {"pathwise_relative", e.pathwise_relative},
                      {"pathwise_mean", e.pathwise_mean},
                      {"sup_w", e.sup_w},
                      {"law_distance", e.law_distance},
                      {"law_distance_per_probe", e.law_distance_per_probe},
                      {"permutation_p", e.permutation_p},
                      {"permutation_threshold", e.permutation_threshold}});
    j["per_eps"] = pe;
    j["warnings"] = rep.warnings;
    return dump(j);
}

std::string report_csv(const ConvergenceReport& rep) {
    std::ostringstream out;
    out << "eps,realization,probe,value_eps,value_limit,pathwise_error,pathwise_relative\n";
    for (const auto& e : rep.per_eps)
        for (std::size_t r = 0; r < e.probes_eps.size(); ++r)
            for (std::size_t k = 0; k < e.probes_eps[r].size(); ++k)
                out << g17(e.eps) << "," << rep.realizations[r].index << "," << k << "," << g17(e.probes_eps[r][k]) << ","
                    << g17(e.probes_limit[r][k]) << "," << g17(e.pathwise_error[r]) << "," << g17(e.pathwise_relative[r])
                    << "\n";
    return out.str();
}

RunManifest run(const std::string& subcommand, const RunConfig& cfg, const std::string& out_dir) {
    validate_config(cfg);
    OutputRegistry reg(out_dir);
    RunManifest m;
    m.subcommand = subcommand;
    m.config_hash = config_hash(cfg);
    m.base_seed = cfg.exp.seed;
    m.module_versions = module_versions();
    m.started = utc_now();
    reg.write_text("config.ini", "config", serialize_config(cfg));
    try {
        if (subcommand == "generate-env")
            cmd_generate_env(cfg, reg);
        else if (subcommand == "stream-recover")
            cmd_stream_recover(cfg, reg);
        else if (subcommand == "solve-corrector")
            cmd_solve_corrector(cfg, reg);
        else if (subcommand == "effective-matrix")
            cmd_effective_matrix(cfg, reg);
        else if (subcommand == "clt")
            cmd_clt(cfg, reg);
        else if (subcommand == "solve-eps")
            cmd_solve_eps(cfg, reg);
        else if (subcommand == "solve-limit")
            cmd_solve_limit(cfg, reg);
        else if (subcommand == "homogenize")
            cmd_homogenize(cfg, reg);
        else
            throw UsageError("unknown subcommand '" + subcommand + "'");
    } catch (const std::exception& e) {
        reg.write_text("error.json", "error", error_json(e, subcommand));
        write_manifest(out_dir, m, reg);
        throw;
    }
    write_manifest(out_dir, m, reg);
    return m;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const CLI::ParseError*>(&e)) return 2;
    if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const ValidationError*>(&e)) return 3;
    if (dynamic_cast<const IoError*>(&e)) return 5;
    if (dynamic_cast<const Error*>(&e)) return 4;
    return 1;
}

std::string error_json(const std::exception& e, const std::string& subcommand) {
    json err;
    if (auto* de = dynamic_cast<const Error*>(&e))
        err["kind"] = de->kind();
    else if (dynamic_cast<const CLI::ParseError*>(&e))
        err["kind"] = "UsageError";
    else
        err["kind"] = "InternalError";
    err["message"] = e.what();
    if (auto* pe = dynamic_cast<const ParseError*>(&e)) {
        err["line"] = pe->line();
        err["column"] = pe->column();
    }
    if (auto* nc = dynamic_cast<const NonConvergence*>(&e)) err["residual_history"] = nc->residual_history();
    if (!subcommand.empty()) err["subcommand"] = subcommand;
    err["exit_code"] = exit_code_for(e);
    return json{{"error", err}}.dump() + "\n";
}

int run_cli(int argc, char** argv) {
    CLI::App app{"Diffusion homogenization experiments"};
    app.require_subcommand(1, 1);
    std::string config_path, out_dir = "out", eps_text;
    std::uint64_t seed = 0;
    int workers = 0;
    for (const auto& name : subcommands()) {
        CLI::App* sc = app.add_subcommand(name);
        sc->add_option("--config", config_path, "Config file");
        sc->add_option("--out", out_dir, "Output directory");
        sc->add_option("--seed", seed, "Base seed");
        sc->add_option("--workers", workers, "Worker threads");
        sc->add_option("--eps", eps_text, "Comma-separated eps list");
    }
    std::string sub;
    try {
        app.parse(argc, argv);
        for (auto* sc : app.get_subcommands()) sub = sc->get_name();
        RunConfig cfg = config_path.empty() ? RunConfig{} : parse_config(config_path);
        auto env = dh_environment();
        apply_env_overrides(cfg, env);
        RunConfig probe;
        auto env_value = [&](const std::string& key, const std::string& section_key) {
            auto it = env.find(key);
            if (it == env.end()) return;
            apply_env_overrides(cfg, {{"DH_EXPERIMENT_" + section_key, it->second}});
        };
        env_value("DH_SEED", "SEED");
        env_value("DH_WORKERS", "WORKERS");
        env_value("DH_EPS", "EPS_LIST");
        auto* sc = app.get_subcommand(sub);
        if (sc->count("--seed")) cfg.exp.seed = seed;
        if (sc->count("--workers")) cfg.exp.workers = workers;
        if (sc->count("--eps")) apply_env_overrides(cfg, {{"DH_EXPERIMENT_EPS_LIST", eps_text}});
        RunManifest m = run(sub, cfg, out_dir);
        json ok{{"status", "ok"}, {"subcommand", sub}, {"out", out_dir}, {"config_hash", m.config_hash}};
        std::cout << ok.dump() << "\n";
        return 0;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << error_json(e, sub);
        return 2;
    } catch (const std::exception& e) {
        std::cerr << error_json(e, sub);
        return exit_code_for(e);
    }
}

}  // namespace dh
