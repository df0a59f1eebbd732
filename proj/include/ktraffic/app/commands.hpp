#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

#include "ktraffic/app/config.hpp"

namespace ktraffic::app {

inline constexpr const char* kVersion = "0.1.0";

// Each subcommand writes its data files and a manifest into cfg.out_dir and
// returns the manifest it wrote.
nlohmann::json run_simulate(const RunConfig& cfg);
nlohmann::json run_equilibrium(const RunConfig& cfg);
nlohmann::json run_diagram(const RunConfig& cfg);
nlohmann::json run_convergence(const RunConfig& cfg);
nlohmann::json run_dump_tensor(const RunConfig& cfg);

nlohmann::json run_command(std::string_view name, const RunConfig& cfg);

// Maps an in-flight exception to the documented exit codes (2 config, 3 numerical, 4 I/O, 1 otherwise).
int exit_code_for(const std::exception& e);

}  // namespace ktraffic::app
