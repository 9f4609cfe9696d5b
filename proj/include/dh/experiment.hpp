#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dh/corrector.hpp"
#include "dh/environment.hpp"
#include "dh/pde_solver.hpp"

namespace dh {

enum class EnvKind { random, trivial, laminate };
EnvKind parse_env_kind(const std::string& s);
std::string to_string(EnvKind k);

/// Where the transport path w^eps comes from: the periodic torus drift of the
/// environment, or an independent long realization of the drift model.
enum class DriftSource { torus, series };
DriftSource parse_drift_source(const std::string& s);
std::string to_string(DriftSource s);

struct ExperimentConfig {
    SpaceTimeGrid grid;
    SpectralParams params;
    BbarSpec bbar;
    EnvKind env_kind = EnvKind::random;
    /// Laminate: alpha(x_1) = lambda + (Lambda - lambda) (1 + sin(2 pi x_1 / L)) / 2.
    SimDomain domain;
    double T = 0.01;
    double dt = 1e-4;
    int n_snapshots = 10;
    DataPreset data;
    std::vector<double> eps_list = {0.25, 0.125, 0.0625};
    int ensemble = 4;
    std::uint64_t seed = 1;
    std::vector<double> delta_list = {4e-4, 2e-4, 1e-4};
    double gmres_tol = 1e-9;
    DriftSource drift_source = DriftSource::torus;
    /// Cell width of the long drift series, in drift time units.
    double series_dt = 1.0 / 16.0;
    int permutations = 200;
    int workers = 1;

    void validate() const;
};

struct ProbeSet {
    std::vector<Field> chi;
};

/// Five fixed bumps at distinct centres and scales.
ProbeSet standard_probes(const SimDomain& dom);
std::vector<double> probe_vector(const SimDomain& dom, const ProbeSet& probes, const Field& u);

struct RealizationRecord {
    int index = 0;
    std::uint64_t seed = 0;
    std::vector<double> a_bar;
    double lambda_min = 0.0;
    double duality_gap = 0.0;
    std::vector<double> corrector_residuals;
    std::vector<int> corrector_iterations;
};

struct EpsRecord {
    double eps = 0.0;
    /// Per realization.
    std::vector<double> pathwise_error;
    std::vector<double> pathwise_relative;
    std::vector<double> sup_w;
    std::vector<std::vector<double>> probes_eps;
    std::vector<std::vector<double>> probes_limit;
    double pathwise_mean = 0.0;
    double law_distance = 0.0;
    std::vector<double> law_distance_per_probe;
    double permutation_p = 1.0;
    double permutation_threshold = 0.0;
};

struct ConvergenceReport {
    int schema_version = 1;
    std::string status = "complete";
    std::string error;
    std::vector<double> sigma;
    std::vector<RealizationRecord> realizations;
    std::vector<EpsRecord> per_eps;
    std::vector<std::string> warnings;
    /// Wall-clock seconds per stage; kept out of the deterministic report body.
    std::vector<std::pair<std::string, double>> timings;
};

EnvironmentRealization make_environment(const ExperimentConfig& cfg, int realization);

/// On failure the partial report is handed to `on_partial` before the error is rethrown.
ConvergenceReport homogenization_run(const ExperimentConfig& cfg,
                                     const std::function<void(const ConvergenceReport&)>& on_partial = {});

/// Energy distance between two samples of equal-length vectors.
double law_distance(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b);

struct ResidualConfig {
    double eps = 0.0625;
    double delta = 1e-4;
    int direction = 0;
    DataPreset psi;
    CauchyData data;
    SolveOptions opts;
    /// Effective matrix used as the reference flux; empty means compute it at `delta`.
    std::vector<double> a_bar;
};

struct ResidualPair {
    double plain = 0.0;
    double corrected = 0.0;
    /// delta |int int phi~ rho~ d_i psi| with phi~ the unscaled transported transpose corrector.
    double delta_term = 0.0;
    /// A priori constant C with delta_term <= C delta^{1/2}.
    double delta_bound = 0.0;
};

/// Weak-form residuals |int int ((a~+s~) - a_bar) grad u . grad chi| with u the homogenized
/// solution in the moving frame, for chi = psi and chi = psi + eps sum_k phi~^t_k d_k psi.
ResidualPair perturbed_test_residual(const EnvironmentRealization& env, const ResidualConfig& rc);

}  // namespace dh
