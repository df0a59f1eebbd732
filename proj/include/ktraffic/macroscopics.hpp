#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ktraffic/dynamics.hpp"
#include "ktraffic/equilibrium.hpp"
#include "ktraffic/model.hpp"

namespace ktraffic {

struct Moments {
    double rho = 0.0;
    double flux = 0.0;
    double mean_speed = 0.0;
};

Moments moments(const CellMassVector& f, const VelocityGrid& grid);

double expected_speed(Kernel kernel, double v_star, double v_field, double P, double delta_v, double v_max);

// Acceleration of the mean speed at t = 0 when every vehicle starts at rest.
double initial_acceleration(Kernel kernel, double rho, double P, double eta, double delta_v);

struct DiagramSample {
    double rho = 0.0;
    double flux = 0.0;
    double mean_speed = 0.0;
    bool converged = true;
    double residual = 0.0;
};

struct FundamentalDiagram {
    std::vector<DiagramSample> samples;
    Kernel kernel = Kernel::Delta;
    int T = 1;
    std::optional<double> r;  // nullopt stands for the r -> infinity limit
    std::string law;
    double eta = 1.0;
};

struct DiagramOptions {
    SteadyStateControls steady;
    unsigned workers = 0;  // 0 uses the hardware concurrency
};

// δ samples come from the closed-form equilibrium; χ samples from the steady state reached
// from a uniform start, flagged when the search times out.
FundamentalDiagram fundamental_diagram(const ModelParams& params, const ProbabilityLaw& law, double r,
                                       const std::vector<double>& rho_samples, const DiagramOptions& options = {});

double flux_infinite_r(const QuantizedEquilibrium& eq, double delta_v);

FundamentalDiagram infinite_r_diagram(const ModelParams& params, const ProbabilityLaw& law,
                                      const std::vector<double>& rho_samples);

struct Transition {
    double rho_lo = 0.0;
    double rho_hi = 0.0;
    double slope_before = 0.0;
    double slope_after = 0.0;
};

struct CapacityDrop {
    double rho_at_max_flux = 0.0;
    double max_flux = 0.0;
    double drop_magnitude = 0.0;
    double bracket_lo = 0.0;
    double bracket_hi = 0.0;
    bool sparse = false;
    std::vector<Transition> transitions;
};

// The capacity drop is taken at the first local maximum of the flux. A transition is a run of consecutive sample intervals where the secant slope falls by more
// than slope_drop times the free-flow slope.
CapacityDrop detect_capacity_drop(const FundamentalDiagram& diagram, double slope_drop = 0.25);

double compare_diagrams(const FundamentalDiagram& a, const FundamentalDiagram& b);

// Header "rho,flux,u,kernel,T,r,gamma,converged,residual".
void write_diagram_csv(std::ostream& out, const FundamentalDiagram& diagram, bool header = true);

}  // namespace ktraffic
