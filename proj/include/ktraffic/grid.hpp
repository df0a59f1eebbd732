#pragma once

#include <cstddef>
#include <vector>

#include "ktraffic/model.hpp"

namespace ktraffic {

// Ratio r = delta_v / dv between the speed jump and the cell amplitude.
struct GridRatio {
    double r = 1.0;
    double r_plus = 1.5;
    double r_minus = 0.5;
    bool integer = true;

    // r as an integer; throws ConfigError when r is not integral.
    int as_integer() const;

    // Built from the exact integers N - 1 and T so that integrality is decided without rounding.
    static GridRatio from_cells(std::size_t n_cells, int T);
};

// Cells I_1 = [0, dv/2], I_j = [(j-3/2)dv, (j-1/2)dv], I_N = [v_max - dv/2, v_max].
// Indices are 0-based: cell 0 is the half cell containing rest.
class VelocityGrid {
public:
    VelocityGrid(std::size_t n_cells, double v_max);

    std::size_t size() const noexcept { return n_; }
    double dv() const noexcept { return dv_; }
    double v_max() const noexcept { return v_max_; }

    double lower(std::size_t j) const;
    double upper(std::size_t j) const;
    double width(std::size_t j) const { return upper(j) - lower(j); }
    double center(std::size_t j) const;
    std::vector<double> centers() const;

private:
    std::size_t n_;
    double v_max_;
    double dv_;
};

VelocityGrid build_grid(const ModelParams& params, double r);
GridRatio grid_ratio(const ModelParams& params, const VelocityGrid& grid);

}  // namespace ktraffic
