#include "ktraffic/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "format.hpp"
#include "ktraffic/errors.hpp"

namespace ktraffic {

QuantizedEquilibrium closed_form_equilibrium(double rho, double P, int T) {
    if (!(rho >= 0.0) || !std::isfinite(rho)) throw DomainError("density must be non-negative");
    if (!(P >= 0.0 && P <= 1.0)) throw DomainError("braking probability outside [0, 1]");
    if (T < 1) throw DomainError("T must be at least 1");

    QuantizedEquilibrium eq;
    eq.rho = rho;
    eq.P = P;
    eq.masses.assign(static_cast<std::size_t>(T) + 1, 0.0);
    if (P >= 0.5 || rho == 0.0) {
        eq.masses.back() = rho;
        return eq;
    }

    const double q = 1.0 - P;
    auto& m = eq.masses;
    m[0] = rho * (1.0 - 2.0 * P) / q;
    double below = m[0];
    for (int l = 1; l < T; ++l) {
        // q f^2 - b f - c = 0 with c >= 0; the roots have product -c/q.
        const double b = (1.0 - 2.0 * P) * rho - 2.0 * q * below;
        const double c = P * rho * m[l - 1];
        if (!(b < 0.0)) throw std::logic_error("second root of the class recursion is not negative");
        const double disc = std::sqrt(b * b + 4.0 * q * c);
        // b < 0: the negative root (b - disc)/(2q) carries no cancellation.
        m[l] = 2.0 * c / (disc - b);
        below += m[l];
    }
    m[T] = rho - below;
    if (m[T] < 0.0) {
        if (m[T] < -1e-14 * rho) throw std::logic_error("top class mass is negative");
        m[T] = 0.0;
    }
    return eq;
}

CellMassVector equilibrium_on_grid(const QuantizedEquilibrium& eq, int r) {
    if (r < 1) throw DomainError("r must be a positive integer");
    const std::size_t T = eq.masses.size() - 1;
    CellMassVector f(T * static_cast<std::size_t>(r) + 1, 0.0);
    for (std::size_t l = 0; l <= T; ++l) f[l * static_cast<std::size_t>(r)] = eq.masses[l];
    return f;
}

CellMassVector unstable_equilibrium(double rho, double P, int T, int r, int jbar) {
    if (r < 1) throw DomainError("r must be a positive integer");
    if (jbar < 1 || jbar >= r) throw DomainError("shift must satisfy 1 <= jbar < r");
    const auto eq = closed_form_equilibrium(rho, P, T);
    CellMassVector f(static_cast<std::size_t>(T) * r + 1, 0.0);
    for (int l = 0; l < T; ++l) f[static_cast<std::size_t>(jbar + l * r)] = eq.masses[l];
    f.back() += eq.masses[T];
    return f;
}

Staircase staircase(const QuantizedEquilibrium& eq, double delta_v) {
    Staircase s;
    for (std::size_t l = 0; l < eq.masses.size(); ++l) {
        s.locations.push_back(static_cast<double>(l) * delta_v);
        s.masses.push_back(eq.masses[l]);
    }
    return s;
}

SupportReport verify_quantized_support(const CellMassVector& f, const VelocityGrid& grid, double delta_v,
                                       double tol_mass, double tol_loc) {
    if (f.size() != grid.size()) throw DomainError("state does not match the grid");
    if (!(delta_v > 0.0)) throw DomainError("delta_v must be positive");
    SupportReport rep;
    std::size_t j = 0;
    while (j < f.size()) {
        if (f[j] <= tol_mass) {
            rep.stray_mass += f[j];
            ++j;
            continue;
        }
        SupportCluster c;
        c.first = j;
        double moment = 0.0;
        while (j < f.size() && f[j] > tol_mass) {
            c.mass += f[j];
            moment += f[j] * grid.center(j);
            ++j;
        }
        c.last = j - 1;
        c.center = moment / c.mass;
        c.offset = std::abs(c.center - delta_v * std::round(c.center / delta_v));
        rep.max_offset = std::max(rep.max_offset, c.offset);
        rep.clusters.push_back(c);
    }
    rep.pass = rep.max_offset <= tol_loc && rep.stray_mass <= tol_mass;
    return rep;
}

void write_equilibrium_csv(std::ostream& out, const QuantizedEquilibrium& eq, double delta_v) {
    out << "class,speed,mass\n";
    for (std::size_t l = 0; l < eq.masses.size(); ++l)
        out << l + 1 << ',' << detail::fmt17(static_cast<double>(l) * delta_v) << ','
            << detail::fmt17(eq.masses[l]) << '\n';
}

}  // namespace ktraffic
