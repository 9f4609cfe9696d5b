#pragma once

#include <exception>
#include <string>
#include <vector>

#include "dh/config.hpp"
#include "dh/experiment.hpp"
#include "dh/manifest.hpp"

namespace dh {

const std::vector<std::string>& subcommands();

/// Executes one subcommand, writing its outputs and manifest.json into out_dir.
RunManifest run(const std::string& subcommand, const RunConfig& cfg, const std::string& out_dir);

/// Exit codes: 0 success, 1 unexpected, 2 usage, 3 config, 4 numerical, 5 I/O.
int exit_code_for(const std::exception& e);
std::string error_json(const std::exception& e, const std::string& subcommand);

std::string report_json(const ConvergenceReport& rep, const std::string& config_hash);
/// Columns: eps, realization, probe, value_eps, value_limit, pathwise_error, pathwise_relative.
std::string report_csv(const ConvergenceReport& rep);

int run_cli(int argc, char** argv);

}  // namespace dh
