#include "ktraffic/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ktraffic/errors.hpp"

namespace ktraffic {

std::string_view to_string(Kernel k) { return k == Kernel::Delta ? "delta" : "chi"; }

Kernel parse_kernel(std::string_view name) {
    if (name == "delta") return Kernel::Delta;
    if (name == "chi") return Kernel::Chi;
    throw ConfigError("unknown kernel '" + std::string(name) + "' (expected delta or chi)");
}

int ModelParams::speed_classes() const {
    if (!(v_max > 0.0) || !(delta_v > 0.0)) throw ConfigError("v_max and delta_v must be positive");
    const double ratio = v_max / delta_v;
    const double T = std::round(ratio);
    if (T < 1.0 || std::abs(ratio - T) > 1e-9 * T)
        throw ConfigError("delta_v must divide v_max into a whole number of jumps");
    return static_cast<int>(T);
}

void ModelParams::validate() const {
    if (!(v_max > 0.0)) throw ConfigError("v_max must be positive");
    if (!(rho_max > 0.0)) throw ConfigError("rho_max must be positive");
    if (!(eta > 0.0)) throw ConfigError("eta must be positive");
    if (!(delta_v > 0.0 && delta_v <= v_max)) throw ConfigError("delta_v must lie in (0, v_max]");
}

bool ModelParams::whole_classes() const {
    const double ratio = jump_ratio();
    return std::abs(ratio - std::round(ratio)) <= 1e-9 * std::round(ratio);
}

ModelParams make_params(int T, double eta, Kernel kernel, double v_max, double rho_max) {
    if (T < 1) throw ConfigError("T must be at least 1");
    ModelParams p;
    p.v_max = v_max;
    p.rho_max = rho_max;
    p.delta_v = v_max / T;
    p.eta = eta;
    p.kernel = kernel;
    p.validate();
    return p;
}

ProbabilityLaw ProbabilityLaw::power(double gamma) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
    ProbabilityLaw law;
    law.gamma_ = gamma;
    return law;
}

ProbabilityLaw ProbabilityLaw::table(std::vector<std::pair<double, double>> points) {
    if (points.size() < 2) throw ConfigError("a probability table needs at least two points");
    if (points.front().first != 0.0) throw ConfigError("a probability table must start at rho = 0");
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto [rho, P] = points[i];
        if (!(P >= 0.0 && P <= 1.0)) throw ConfigError("table probabilities must lie in [0, 1]");
        if (i > 0) {
            if (!(rho > points[i - 1].first)) throw ConfigError("table densities must be strictly increasing");
            if (P > points[i - 1].second) throw ConfigError("table probabilities must be non-increasing");
        }
    }
    ProbabilityLaw law;
    law.points_ = std::move(points);
    return law;
}

std::string ProbabilityLaw::describe() const {
    if (!is_power()) return "table";
    std::ostringstream os;
    os.precision(17);
    os << gamma_;
    return os.str();
}

double evaluate_probability(const ProbabilityLaw& law, double rho, const ModelParams& params) {
    if (!(rho >= 0.0 && rho <= params.rho_max)) throw DomainError("density outside [0, rho_max]");
    if (law.is_power()) {
        const double x = rho / params.rho_max;
        return std::clamp(1.0 - std::pow(x, law.gamma()), 0.0, 1.0);
    }
    const auto& pts = law.points();
    if (rho > pts.back().first) throw DomainError("density beyond the probability table");
    auto it = std::upper_bound(pts.begin(), pts.end(), rho,
                               [](double x, const std::pair<double, double>& p) { return x < p.first; });
    if (it == pts.end()) return pts.back().second;
    const auto& [x1, y1] = *it;
    const auto& [x0, y0] = *(it - 1);
    return y0 + (y1 - y0) * (rho - x0) / (x1 - x0);
}

std::optional<double> critical_density(const ProbabilityLaw& law, const ModelParams& params) {
    if (law.is_power()) return params.rho_max * std::pow(0.5, 1.0 / law.gamma());

    double lo = 0.0;
    double hi = std::min(params.rho_max, law.points().back().first);
    if (evaluate_probability(law, lo, params) < 0.5 || evaluate_probability(law, hi, params) > 0.5)
        return std::nullopt;
    // Smallest density where P <= 1/2.
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (evaluate_probability(law, mid, params) > 0.5)
            lo = mid;
        else
            hi = mid;
    }
    return hi;
}

}  // namespace ktraffic
