#include "ktraffic/grid.hpp"

#include <cmath>
#include <string>

#include "ktraffic/errors.hpp"

namespace ktraffic {

int GridRatio::as_integer() const {
    if (!integer) throw ConfigError("this operation needs an integer ratio r, got r = " + std::to_string(r));
    return static_cast<int>(std::lround(r));
}

GridRatio GridRatio::from_cells(std::size_t n_cells, int T) {
    if (n_cells < 2 || T < 1) throw ConfigError("a grid needs at least two cells and T >= 1");
    const std::size_t m = n_cells - 1;
    GridRatio g;
    g.integer = m % static_cast<std::size_t>(T) == 0;
    g.r = g.integer ? static_cast<double>(m / static_cast<std::size_t>(T)) : static_cast<double>(m) / T;
    g.r_plus = g.r + 0.5;
    g.r_minus = g.r - 0.5;
    return g;
}

VelocityGrid::VelocityGrid(std::size_t n_cells, double v_max) : n_(n_cells), v_max_(v_max) {
    if (n_cells < 2) throw ConfigError("a velocity grid needs at least two cells");
    if (!(v_max > 0.0)) throw ConfigError("v_max must be positive");
    dv_ = v_max / static_cast<double>(n_cells - 1);
}

double VelocityGrid::lower(std::size_t j) const {
    if (j >= n_) throw std::out_of_range("cell index");
    return j == 0 ? 0.0 : (static_cast<double>(j) - 0.5) * dv_;
}

double VelocityGrid::upper(std::size_t j) const {
    if (j >= n_) throw std::out_of_range("cell index");
    return j + 1 == n_ ? v_max_ : (static_cast<double>(j) + 0.5) * dv_;
}

double VelocityGrid::center(std::size_t j) const {
    if (j >= n_) throw std::out_of_range("cell index");
    if (j == 0) return 0.25 * dv_;
    if (j + 1 == n_) return v_max_ - 0.25 * dv_;
    return static_cast<double>(j) * dv_;
}

std::vector<double> VelocityGrid::centers() const {
    std::vector<double> c(n_);
    for (std::size_t j = 0; j < n_; ++j) c[j] = center(j);
    return c;
}

VelocityGrid build_grid(const ModelParams& params, double r) {
    params.validate();
    if (!(r > 0.0)) throw ConfigError("grid ratio r must be positive");
    const double m = params.whole_classes() ? r * params.speed_classes() : r * params.jump_ratio();
    const double rounded = std::round(m);
    if (rounded < 1.0 || std::abs(m - rounded) > 1e-9 * rounded)
        throw ConfigError("r * T must be an integer (got " + std::to_string(m) + ")");
    return VelocityGrid(static_cast<std::size_t>(rounded) + 1, params.v_max);
}

GridRatio grid_ratio(const ModelParams& params, const VelocityGrid& grid) {
    if (params.whole_classes()) return GridRatio::from_cells(grid.size(), params.speed_classes());
    // Fractional T: r = (N - 1) delta_v / v_max, snapped to an integer when it is one up to rounding.
    GridRatio g;
    g.r = static_cast<double>(grid.size() - 1) / params.jump_ratio();
    const double rounded = std::round(g.r);
    g.integer = std::abs(g.r - rounded) <= 1e-9 * rounded;
    if (g.integer) g.r = rounded;
    g.r_plus = g.r + 0.5;
    g.r_minus = g.r - 0.5;
    return g;
}

}  // namespace ktraffic
