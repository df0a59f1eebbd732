#include "ktraffic/macroscopics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "format.hpp"
#include "ktraffic/errors.hpp"
#include "ktraffic/parallel.hpp"

namespace ktraffic {

Moments moments(const CellMassVector& f, const VelocityGrid& grid) {
    if (f.size() != grid.size()) throw DomainError("state does not match the grid");
    Moments m;
    for (std::size_t j = 0; j < f.size(); ++j) {
        m.rho += f[j];
        m.flux += f[j] * grid.center(j);
    }
    m.mean_speed = m.rho > 0.0 ? m.flux / m.rho : 0.0;
    return m;
}

double expected_speed(Kernel kernel, double v_star, double v_field, double P, double delta_v, double v_max) {
    if (!(v_star >= 0.0 && v_star <= v_max) || !(v_field >= 0.0 && v_field <= v_max))
        throw DomainError("speeds must lie in [0, v_max]");
    const double brake = (1.0 - P) * std::min(v_star, v_field);
    if (kernel == Kernel::Delta) return brake + P * std::min(v_star + delta_v, v_max);
    return brake + P * (v_star + 0.5 * std::min(delta_v, v_max - v_star));
}

double initial_acceleration(Kernel kernel, double rho, double P, double eta, double delta_v) {
    const double a = eta * rho * P * delta_v;
    return kernel == Kernel::Delta ? a : 0.5 * a;
}

namespace {

void check_samples(const std::vector<double>& rho, const ModelParams& params) {
    for (double x : rho)
        if (!(x >= 0.0 && x <= params.rho_max)) throw DomainError("density sample outside [0, rho_max]");
}

}  // namespace

FundamentalDiagram fundamental_diagram(const ModelParams& params, const ProbabilityLaw& law, double r,
                                       const std::vector<double>& rho_samples, const DiagramOptions& options) {
    params.validate();
    check_samples(rho_samples, params);
    const int T = params.speed_classes();
    const VelocityGrid grid = build_grid(params, r);
    const GridRatio ratio = grid_ratio(params, grid);

    FundamentalDiagram d;
    d.kernel = params.kernel;
    d.T = T;
    d.r = ratio.r;
    d.law = law.describe();
    d.eta = params.eta;
    d.samples.resize(rho_samples.size());

    if (params.kernel == Kernel::Delta) {
        const int ri = ratio.as_integer();
        for (std::size_t i = 0; i < rho_samples.size(); ++i) {
            const double rho = rho_samples[i];
            const auto eq = closed_form_equilibrium(rho, evaluate_probability(law, rho, params), T);
            const auto m = moments(equilibrium_on_grid(eq, ri), grid);
            d.samples[i] = {rho, m.flux, m.mean_speed, true, 0.0};
        }
        return d;
    }

    parallel_for(rho_samples.size(), options.workers, [&](std::size_t i) {
        const double rho = rho_samples[i];
        const auto tensor = build_chi_tensor(grid, ratio, evaluate_probability(law, rho, params));
        const CellMassVector f0(grid.size(), rho / static_cast<double>(grid.size()));
        DiagramSample s{rho, 0.0, 0.0, true, 0.0};
        CellMassVector f;
        try {
            auto ss = find_steady_state(f0, tensor, params.eta, options.steady);
            f = std::move(ss.state);
            s.residual = ss.residual;
        } catch (const ConvergenceError& e) {
            f = e.last_state();
            s.residual = e.residual();
            s.converged = false;
        }
        const auto m = moments(f, grid);
        s.flux = m.flux;
        s.mean_speed = m.mean_speed;
        d.samples[i] = s;
    });
    return d;
}

double flux_infinite_r(const QuantizedEquilibrium& eq, double delta_v) {
    double q = 0.0;
    for (std::size_t l = 0; l < eq.masses.size(); ++l) q += eq.masses[l] * static_cast<double>(l) * delta_v;
    return q;
}

FundamentalDiagram infinite_r_diagram(const ModelParams& params, const ProbabilityLaw& law,
                                      const std::vector<double>& rho_samples) {
    params.validate();
    check_samples(rho_samples, params);
    FundamentalDiagram d;
    d.kernel = Kernel::Delta;
    d.T = params.speed_classes();
    d.law = law.describe();
    d.eta = params.eta;
    for (double rho : rho_samples) {
        const auto eq = closed_form_equilibrium(rho, evaluate_probability(law, rho, params), d.T);
        const double q = flux_infinite_r(eq, params.delta_v);
        d.samples.push_back({rho, q, rho > 0.0 ? q / rho : 0.0, true, 0.0});
    }
    return d;
}

CapacityDrop detect_capacity_drop(const FundamentalDiagram& diagram, double slope_drop) {
    const auto& s = diagram.samples;
    const std::size_t n = s.size();
    if (n < 3) throw DomainError("capacity-drop detection needs at least three samples");
    for (std::size_t i = 1; i < n; ++i)
        if (!(s[i].rho > s[i - 1].rho)) throw DomainError("diagram densities must be strictly increasing");

    CapacityDrop out;
    // The drop follows the first local maximum; with small gamma the congested branch can
    // climb above it again towards rho_max.
    std::size_t imax = n - 1;
    for (std::size_t i = 0; i + 1 < n; ++i)
        if (s[i + 1].flux < s[i].flux) {
            imax = i;
            break;
        }
    out.rho_at_max_flux = s[imax].rho;
    out.max_flux = s[imax].flux;
    const std::size_t inext = std::min(imax + 1, n - 1);
    out.drop_magnitude = s[imax].flux - s[inext].flux;
    out.bracket_lo = s[imax].rho;
    out.bracket_hi = s[inext].rho;
    // Fewer than three samples per 0.01 of density cannot resolve the jump.
    if (out.bracket_hi - out.bracket_lo > 0.01 / 3.0 + 1e-12 || inext == imax) {
        out.sparse = true;
        out.bracket_lo = s[imax == 0 ? 0 : imax - 1].rho;
        out.bracket_hi = s[std::min(imax + 2, n - 1)].rho;
    }

    std::vector<double> slope(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) slope[i] = (s[i + 1].flux - s[i].flux) / (s[i + 1].rho - s[i].rho);
    double ref = std::abs(slope[0]);
    if (ref == 0.0)
        for (double x : slope) ref = std::max(ref, std::abs(x));
    const double threshold = slope_drop * ref;
    std::size_t i = 0;
    while (i + 1 < slope.size()) {
        if (slope[i] - slope[i + 1] <= threshold) {
            ++i;
            continue;
        }
        std::size_t last = i;
        while (last + 2 < slope.size() && slope[last + 1] - slope[last + 2] > threshold) ++last;
        out.transitions.push_back({s[i].rho, s[last + 2].rho, slope[i], slope[last + 1]});
        i = last + 1;
    }
    return out;
}

double compare_diagrams(const FundamentalDiagram& a, const FundamentalDiagram& b) {
    if (a.samples.size() != b.samples.size()) throw DomainError("diagrams have different sample counts");
    double d = 0.0;
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        if (std::abs(a.samples[i].rho - b.samples[i].rho) > 1e-12) throw DomainError("diagrams sample different densities");
        d = std::max(d, std::abs(a.samples[i].flux - b.samples[i].flux));
    }
    return d;
}

void write_diagram_csv(std::ostream& out, const FundamentalDiagram& diagram, bool header) {
    if (header) out << "rho,flux,u,kernel,T,r,gamma,converged,residual\n";
    const std::string r = diagram.r ? detail::fmt17(*diagram.r) : "inf";
    for (const auto& s : diagram.samples)
        out << detail::fmt17(s.rho) << ',' << detail::fmt17(s.flux) << ',' << detail::fmt17(s.mean_speed) << ','
            << to_string(diagram.kernel) << ',' << diagram.T << ',' << r << ',' << diagram.law << ','
            << (s.converged ? 1 : 0) << ',' << detail::fmt17(s.residual) << '\n';
}

}  // namespace ktraffic
