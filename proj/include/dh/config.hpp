#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dh/experiment.hpp"

namespace dh {

/// Everything a run reads from the config file. Sections: [grid], [params], [bbar], [experiment].
struct RunConfig {
    ExperimentConfig exp;
    /// Corrector regularization for solve-corrector and effective-matrix (single value).
    double delta = 1e-4;
    /// Corrector direction; empty means every unit vector.
    std::vector<double> direction;
    /// solve-eps formulation: direct or transported.
    std::string formulation = "transported";
    /// clt: number of drift paths, lag window and block horizon.
    int paths = 500;
    int lag_max = 32;
    int horizon = 256;
    /// stream-recover: 0 selects the unregularized solve.
    double stream_alpha = 0.0;
    /// solve-limit: empty a_bar means compute it from the first environment; empty sigma means the
    /// analytic covariance of the drift model.
    std::vector<double> a_bar;
    std::vector<double> sigma;
    /// Load the environment from this container instead of generating it.
    std::string env_file;

    bool operator==(const RunConfig& o) const;
};

/// Raw text entries before interpretation, keyed by section then key.
using ConfigEntries = std::map<std::string, std::map<std::string, std::string>>;

/// Parses key = value lines under [section] headers; '#' and ';' start comments.
/// Throws ParseError with line and column.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::string& path);

/// Applies DH_<SECTION>_<KEY> overrides from `env` (name -> value) on top of `cfg`.
void apply_env_overrides(RunConfig& cfg, const std::map<std::string, std::string>& env);
/// Collects DH_* variables from the process environment.
std::map<std::string, std::string> dh_environment();

/// Canonical text form: fixed section and key order, doubles as %.17g.
std::string serialize_config(const RunConfig& cfg);
/// FNV-1a of the canonical form, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

void validate_config(const RunConfig& cfg);

}  // namespace dh
