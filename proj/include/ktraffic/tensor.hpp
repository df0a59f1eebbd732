#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "ktraffic/grid.hpp"
#include "ktraffic/model.hpp"

namespace ktraffic {

struct TensorEntry {
    std::uint32_t row;  // candidate cell h
    std::uint32_t col;  // field cell k
    double value;
};

// A weight that applies to every field column k of one candidate row h.
struct RowWeight {
    std::uint32_t row;
    double value;
};

// One matrix A^j: explicit braking / keep-speed entries plus acceleration rows that do not
// depend on the field vehicle.
struct InteractionMatrix {
    std::vector<TensorEntry> entries;
    std::vector<RowWeight> rows;

    double at(std::size_t h, std::size_t k) const;
};

struct InteractionTensor {
    Kernel kernel = Kernel::Delta;
    double probability = 0.0;
    std::vector<InteractionMatrix> matrices;

    std::size_t size() const noexcept { return matrices.size(); }
    double entry(std::size_t j, std::size_t h, std::size_t k) const { return matrices.at(j).at(h, k); }
    std::vector<std::vector<double>> dense(std::size_t j) const;
};

// w[h][j]: probability that an accelerating candidate from cell h lands in cell j.
using TransferWeights = std::vector<std::vector<double>>;

TransferWeights delta_transfer_weights(const VelocityGrid& grid, const GridRatio& ratio);
TransferWeights chi_transfer_weights(const VelocityGrid& grid, const GridRatio& ratio);

InteractionTensor build_delta_tensor_integer(const VelocityGrid& grid, const GridRatio& ratio, double P);
InteractionTensor build_delta_tensor_generic(const VelocityGrid& grid, const GridRatio& ratio, double P);
InteractionTensor build_chi_tensor(const VelocityGrid& grid, const GridRatio& ratio, double P);

// Chooses the δ builder by the integer flag.
InteractionTensor build_tensor(Kernel kernel, const VelocityGrid& grid, const GridRatio& ratio, double P);

struct StochasticityReport {
    double tol = 0.0;
    double max_deviation = 0.0;
    std::size_t worst_row = 0;
    std::size_t worst_col = 0;
    double min_entry = 0.0;
    std::vector<std::vector<double>> deviation;  // |sum_j A^j_hk - 1| per (h, k)
    bool pass = false;
};

StochasticityReport verify_stochasticity(const InteractionTensor& tensor, double tol = 1e-12);

// Columnar dump: header "j,h,k,value", 1-based indices, nonzero entries only.
void write_tensor(std::ostream& out, const InteractionTensor& tensor);

}  // namespace ktraffic
