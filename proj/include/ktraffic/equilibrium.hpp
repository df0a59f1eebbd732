#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "ktraffic/dynamics.hpp"
#include "ktraffic/grid.hpp"

namespace ktraffic {

// Stable equilibrium of the δ model: masses of the T+1 speed classes 0, dv, ..., v_max.
struct QuantizedEquilibrium {
    std::vector<double> masses;
    double rho = 0.0;
    double P = 0.0;

    int classes() const noexcept { return static_cast<int>(masses.size()); }
};

QuantizedEquilibrium closed_form_equilibrium(double rho, double P, int T);

// Class l goes to cell l*r (0-based).
CellMassVector equilibrium_on_grid(const QuantizedEquilibrium& eq, int r);

// Fixed point reached when the lowest jbar cells start empty: classes 1..T move up by jbar
// cells, the top class stays in the last cell.
CellMassVector unstable_equilibrium(double rho, double P, int T, int r, int jbar);

Staircase staircase(const QuantizedEquilibrium& eq, double delta_v);

struct SupportCluster {
    std::size_t first = 0;  // 0-based cell range, inclusive
    std::size_t last = 0;
    double mass = 0.0;
    double center = 0.0;  // mass-weighted mean speed
    double offset = 0.0;  // distance to the nearest multiple of delta_v
};

struct SupportReport {
    std::vector<SupportCluster> clusters;
    double stray_mass = 0.0;
    double max_offset = 0.0;
    bool pass = false;
};

SupportReport verify_quantized_support(const CellMassVector& f, const VelocityGrid& grid, double delta_v,
                                       double tol_mass, double tol_loc);

// Header "class,speed,mass".
void write_equilibrium_csv(std::ostream& out, const QuantizedEquilibrium& eq, double delta_v);

}  // namespace ktraffic
