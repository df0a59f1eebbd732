#include "ktraffic/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "format.hpp"
#include "ktraffic/errors.hpp"

namespace ktraffic {

namespace {

// Cell edges in units of dv: the top speed sits at V = N - 1 and interior edges are half-integers.
struct Edges {
    double V;
    std::size_t n;
    double lo(std::size_t j) const { return j == 0 ? 0.0 : static_cast<double>(j) - 0.5; }
    double hi(std::size_t j) const { return j + 1 == n ? V : static_cast<double>(j) + 0.5; }
};

Edges edges_of(const VelocityGrid& grid) { return {static_cast<double>(grid.size() - 1), grid.size()}; }

void check_probability(double P) {
    if (!(P >= 0.0 && P <= 1.0)) throw DomainError("braking probability outside [0, 1]");
}

// Integral over [x1, x2] of |[x, x + r] ∩ [c, d]| / r. The integrand is continuous and
// linear between the breakpoints c - r, d - r, c, d, so trapezoids are exact.
double linear_part(double x1, double x2, double r, double c, double d) {
    auto g = [&](double x) { return std::max(0.0, std::min(x + r, d) - std::max(x, c)) / r; };
    double pts[6] = {x1, x2, c - r, d - r, c, d};
    std::sort(pts, pts + 6);
    double total = 0.0;
    double prev = x1;
    for (double p : pts) {
        if (p <= prev || p > x2) continue;
        total += 0.5 * (g(prev) + g(p)) * (p - prev);
        prev = p;
    }
    if (x2 > prev) total += 0.5 * (g(prev) + g(x2)) * (x2 - prev);
    return total;
}

// Integral over [x1, x2] of |[x, V] ∩ [c, d]| / (V - x), for x1 >= V - r and d <= V.
double saturated_part(double x1, double x2, double V, double c, double d) {
    double total = 0.0;
    // x < c: the whole landing cell overlaps [x, V].
    const double a1 = x1;
    const double a2 = std::min(x2, c);
    if (a2 > a1) total += (d - c) * std::log((V - a1) / (V - a2));
    // c <= x < d: overlap d - x = (d - V) + (V - x).
    const double b1 = std::max(x1, c);
    const double b2 = std::min(x2, d);
    if (b2 > b1) {
        total += b2 - b1;
        if (d < V) total += (d - V) * std::log((V - b1) / (V - b2));
    }
    return total;
}

InteractionTensor assemble(Kernel kernel, const VelocityGrid& grid, double P, const TransferWeights& w) {
    const std::size_t n = grid.size();
    const double keep = 1.0 - P;
    InteractionTensor t;
    t.kernel = kernel;
    t.probability = P;
    t.matrices.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        auto& m = t.matrices[j];
        const auto jj = static_cast<std::uint32_t>(j);
        m.entries.reserve(2 * (n - j) - 1);
        m.entries.push_back({jj, jj, keep});
        for (std::size_t k = j + 1; k < n; ++k) m.entries.push_back({jj, static_cast<std::uint32_t>(k), keep});
        for (std::size_t h = j + 1; h < n; ++h) m.entries.push_back({static_cast<std::uint32_t>(h), jj, keep});
        for (std::size_t h = 0; h < n; ++h)
            if (w[h][j] > 0.0) m.rows.push_back({static_cast<std::uint32_t>(h), P * w[h][j]});
    }
    return t;
}

}  // namespace

double InteractionMatrix::at(std::size_t h, std::size_t k) const {
    double v = 0.0;
    for (const auto& e : entries)
        if (e.row == h && e.col == k) v += e.value;
    for (const auto& rw : rows)
        if (rw.row == h) v += rw.value;
    return v;
}

std::vector<std::vector<double>> InteractionTensor::dense(std::size_t j) const {
    const std::size_t n = size();
    std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
    const auto& m = matrices.at(j);
    for (const auto& e : m.entries) a[e.row][e.col] += e.value;
    for (const auto& rw : m.rows)
        for (auto& x : a[rw.row]) x += rw.value;
    return a;
}

TransferWeights delta_transfer_weights(const VelocityGrid& grid, const GridRatio& ratio) {
    const Edges e = edges_of(grid);
    const std::size_t n = grid.size();
    const double r = ratio.r;
    TransferWeights w(n, std::vector<double>(n, 0.0));
    for (std::size_t h = 0; h < n; ++h) {
        const double a = e.lo(h) + r;
        const double b = e.hi(h) + r;
        const double width = e.hi(h) - e.lo(h);
        for (std::size_t j = 0; j + 1 < n; ++j) {
            const double len = std::min(b, e.hi(j)) - std::max(a, e.lo(j));
            if (len > 0.0) w[h][j] = len / width;
        }
        // Everything past the lower edge of the top cell is capped at v_max.
        const double top = b - std::max(a, e.lo(n - 1));
        if (top > 0.0) w[h][n - 1] = top / width;
    }
    return w;
}

TransferWeights chi_transfer_weights(const VelocityGrid& grid, const GridRatio& ratio) {
    const Edges e = edges_of(grid);
    const std::size_t n = grid.size();
    const double r = ratio.r;
    const double V = e.V;
    const double knee = V - r;  // beyond it the landing interval is truncated at v_max
    TransferWeights w(n, std::vector<double>(n, 0.0));
    for (std::size_t h = 0; h < n; ++h) {
        const double a = e.lo(h);
        const double b = e.hi(h);
        const double width = b - a;
        for (std::size_t j = 0; j < n; ++j) {
            const double c = e.lo(j);
            const double d = e.hi(j);
            double total = 0.0;
            const double m = std::min(b, knee);
            if (m > a) total += linear_part(a, m, r, c, d);
            const double s = std::max(a, knee);
            if (b > s) total += saturated_part(s, b, V, c, d);
            if (total > 0.0) w[h][j] = total / width;
        }
    }
    return w;
}

InteractionTensor build_delta_tensor_integer(const VelocityGrid& grid, const GridRatio& ratio, double P) {
    check_probability(P);
    const auto r = static_cast<std::size_t>(ratio.as_integer());
    const std::size_t n = grid.size();
    if (r > n - 1) throw ConfigError("ratio r exceeds the number of cell steps");
    TransferWeights w(n, std::vector<double>(n, 0.0));
    for (std::size_t h = 0; h < n; ++h) w[h][std::min(h + r, n - 1)] = 1.0;
    return assemble(Kernel::Delta, grid, P, w);
}

InteractionTensor build_delta_tensor_generic(const VelocityGrid& grid, const GridRatio& ratio, double P) {
    check_probability(P);
    if (!(ratio.r > 0.0)) throw ConfigError("ratio r must be positive");
    return assemble(Kernel::Delta, grid, P, delta_transfer_weights(grid, ratio));
}

InteractionTensor build_chi_tensor(const VelocityGrid& grid, const GridRatio& ratio, double P) {
    check_probability(P);
    ratio.as_integer();
    return assemble(Kernel::Chi, grid, P, chi_transfer_weights(grid, ratio));
}

InteractionTensor build_tensor(Kernel kernel, const VelocityGrid& grid, const GridRatio& ratio, double P) {
    if (kernel == Kernel::Chi) return build_chi_tensor(grid, ratio, P);
    return ratio.integer ? build_delta_tensor_integer(grid, ratio, P) : build_delta_tensor_generic(grid, ratio, P);
}

StochasticityReport verify_stochasticity(const InteractionTensor& tensor, double tol) {
    const std::size_t n = tensor.size();
    std::vector<std::vector<double>> sum(n, std::vector<double>(n, 0.0));
    double min_entry = std::numeric_limits<double>::infinity();
    for (const auto& m : tensor.matrices) {
        for (const auto& e : m.entries) {
            sum[e.row][e.col] += e.value;
            min_entry = std::min(min_entry, e.value);
        }
        for (const auto& rw : m.rows) {
            for (auto& x : sum[rw.row]) x += rw.value;
            min_entry = std::min(min_entry, rw.value);
        }
    }
    StochasticityReport rep;
    rep.tol = tol;
    rep.min_entry = n ? min_entry : 0.0;
    rep.deviation.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t h = 0; h < n; ++h)
        for (std::size_t k = 0; k < n; ++k) {
            const double dev = std::abs(sum[h][k] - 1.0);
            rep.deviation[h][k] = dev;
            if (dev > rep.max_deviation || std::isnan(dev)) {
                rep.max_deviation = dev;
                rep.worst_row = h;
                rep.worst_col = k;
            }
        }
    rep.pass = rep.max_deviation <= tol && rep.min_entry >= 0.0;
    return rep;
}

void write_tensor(std::ostream& out, const InteractionTensor& tensor) {
    out << "j,h,k,value\n";
    for (std::size_t j = 0; j < tensor.size(); ++j) {
        const auto a = tensor.dense(j);
        for (std::size_t h = 0; h < a.size(); ++h)
            for (std::size_t k = 0; k < a.size(); ++k)
                if (a[h][k] != 0.0)
                    out << j + 1 << ',' << h + 1 << ',' << k + 1 << ',' << detail::fmt17(a[h][k]) << '\n';
    }
}

}  // namespace ktraffic
