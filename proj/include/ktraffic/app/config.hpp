#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ktraffic/dynamics.hpp"
#include "ktraffic/grid.hpp"
#include "ktraffic/model.hpp"

namespace ktraffic::app {

struct InitialCondition {
    enum class Kind { Uniform, Rest, Congested, EmptyLow, Custom, Equilibrium };
    Kind kind = Kind::Uniform;
    // congested / empty_low: mass placed in the rest cell; equilibrium: perturbation amplitude
    double epsilon = 0.0;
    int empty_cells = 0;  // empty_low: lowest cells emptied (the rest cell then receives epsilon)
    std::vector<double> values;
    std::uint64_t seed = 1;
    std::string label;
};

// How the grid was requested; resolved against T into a ratio r.
struct GridSpec {
    enum class Kind { Ratio, Cells, CellWidth };
    Kind kind = Kind::Ratio;
    double value = 1.0;

    double ratio(const ModelParams& params) const;
};

struct RunConfig {
    ModelParams params;
    ProbabilityLaw law = ProbabilityLaw::power(1.0);
    GridSpec grid;
    double rho = 0.5;
    std::vector<InitialCondition> initial{InitialCondition{}};

    IntegratorControls integrator;
    double t_end = 100.0;
    SteadyStateControls steady;

    // Sweeps; empty lists fall back to the single values above.
    std::vector<double> rho_grid;
    std::vector<double> r_values;
    std::vector<double> gamma_values;
    std::vector<int> T_values;
    bool infinite_r = true;

    double perturbation = 1e-3;
    std::uint64_t seed = 1;
    double convergence_t_end = 0.0;  // 0 selects 400 / eta
    double window_upper = 1e-3;
    double window_lower = 1e-9;

    std::string out_dir = ".";
    std::string prefix = "run";
    unsigned workers = 0;

    nlohmann::json source;  // effective configuration, echoed in manifests
};

// Parses a configuration document (comments allowed). Unknown keys are rejected.
RunConfig parse_config(const nlohmann::json& doc);
nlohmann::json read_config_file(const std::string& path);

// Adds epsilon * U[0,1) to every cell (seeded, platform independent) and rescales to the original mass.
CellMassVector perturb(CellMassVector f, double epsilon, std::uint64_t seed);

CellMassVector make_initial(const InitialCondition& ic, const RunConfig& cfg, const VelocityGrid& grid, double P);

}  // namespace ktraffic::app
