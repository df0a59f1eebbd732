#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "ktraffic/grid.hpp"
#include "ktraffic/tensor.hpp"

namespace ktraffic {

// Vehicles per cell, f_j = integral of the kinetic density over I_j.
using CellMassVector = std::vector<double>;

// g_j = eta (f^T A^j f - f_j sum_k f_k)
void collision_rhs(std::span<const double> f, const InteractionTensor& tensor, double eta, std::span<double> out);
CellMassVector collision_rhs(std::span<const double> f, const InteractionTensor& tensor, double eta);

enum class Stepper { Rk4, DormandPrince };

struct IntegratorControls {
    Stepper stepper = Stepper::Rk4;
    // Fixed RK4 step; 0 selects 0.1 / (eta rho). Larger values are rejected.
    double step = 0.0;
    // Dormand-Prince tolerances and the step below which integration is abandoned.
    double rtol = 1e-10;
    double atol = 1e-14;
    double min_step = 1e-12;
    // Sampling of stored states. With geometric_ratio > 1 samples are taken at
    // t_1 q^k, t_1 being the first step; otherwise every sample_interval (0 keeps every step).
    double sample_interval = 0.0;
    double geometric_ratio = 0.0;
    // Components in [-negative_tol, 0) are clamped to zero, anything below is an error.
    double negative_tol = 1e-12;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<CellMassVector> states;
    double terminal_residual = 0.0;
    double max_mass_drift = 0.0;
    double min_component = 0.0;  // smallest value seen before clamping
    std::size_t clamped = 0;
    std::size_t steps = 0;
};

Trajectory integrate(const CellMassVector& f0, const InteractionTensor& tensor, double eta, double t_end,
                     const IntegratorControls& controls = {});

struct SteadyStateControls {
    double residual_tol = 1e-10;
    double change_tol = 1e-10;
    double t_max = 1e6;
    IntegratorControls integrator{.stepper = Stepper::DormandPrince};
};

struct SteadyState {
    CellMassVector state;
    double time = 0.0;
    double residual = 0.0;
    double max_mass_drift = 0.0;
    double min_component = 0.0;
    std::size_t clamped = 0;
    std::size_t steps = 0;
};

// Integrates until ||rhs||_inf <= residual_tol and the relative change per unit time is
// <= change_tol. Throws ConvergenceError after t_max.
SteadyState find_steady_state(const CellMassVector& f0, const InteractionTensor& tensor, double eta,
                              const SteadyStateControls& controls = {});

std::vector<double> distance_to_equilibrium(const Trajectory& traj, const CellMassVector& f_inf);

struct ConvergenceFit {
    double rate = 0.0;       // M in e(t) ~ C exp(-M t)
    double prefactor = 0.0;  // C
    double t_begin = 0.0;
    double t_end = 0.0;
    double rms_residual = 0.0;  // of log e about the fitted line
    std::size_t points = 0;
};

// Least squares fit of log e(t) over times in [t_begin, t_end].
ConvergenceFit fit_convergence_rate(std::span<const double> times, std::span<const double> e, double t_begin,
                                    double t_end);

// Times where e first drops below upper * e(0) and last stays above lower * e(0).
std::pair<double, double> decay_window(std::span<const double> times, std::span<const double> e, double upper,
                                       double lower);

// F_N(v) = integral of the piecewise constant density from 0 to v.
class PiecewiseLinearCdf {
public:
    PiecewiseLinearCdf(std::vector<double> knots, std::vector<double> values);
    double operator()(double v) const;
    const std::vector<double>& knots() const noexcept { return knots_; }
    const std::vector<double>& values() const noexcept { return values_; }

private:
    std::vector<double> knots_;
    std::vector<double> values_;
};

PiecewiseLinearCdf cumulative_distribution(const CellMassVector& f, const VelocityGrid& grid);

// Right-continuous step function with atoms at the given locations.
struct Staircase {
    std::vector<double> locations;
    std::vector<double> masses;

    double operator()(double v) const;
    double left_limit(double v) const;
};

// sup over v of |F(v) - G(v)|, one-sided limits at the atoms included.
double sup_distance(const PiecewiseLinearCdf& F, const Staircase& G);
// Levy distance: smallest eps with G(v - eps) - eps <= F(v) <= G(v + eps) + eps for all v.
double levy_distance(const PiecewiseLinearCdf& F, const Staircase& G);

void write_trajectory_csv(std::ostream& out, const Trajectory& traj, const VelocityGrid& grid,
                          const InteractionTensor& tensor, double eta);

}  // namespace ktraffic
