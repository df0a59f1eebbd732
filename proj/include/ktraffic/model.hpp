#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ktraffic {

enum class Kernel { Delta, Chi };

std::string_view to_string(Kernel k);
Kernel parse_kernel(std::string_view name);

struct ModelParams {
    double v_max = 1.0;
    double rho_max = 1.0;
    double delta_v = 1.0 / 3.0;
    double eta = 1.0;
    Kernel kernel = Kernel::Delta;

    // Number of speed jumps T = v_max / delta_v; throws ConfigError unless it is a positive integer.
    int speed_classes() const;
    bool whole_classes() const;
    // v_max / delta_v without the integrality requirement. Grids only need r times this to be whole.
    double jump_ratio() const { return v_max / delta_v; }
    void validate() const;
};

ModelParams make_params(int T, double eta = 1.0, Kernel kernel = Kernel::Delta, double v_max = 1.0,
                        double rho_max = 1.0);

// Braking probability as a function of density. Either 1 - (rho/rho_max)^gamma or a
// monotone table interpolated linearly in rho.
class ProbabilityLaw {
public:
    static ProbabilityLaw power(double gamma);
    static ProbabilityLaw table(std::vector<std::pair<double, double>> points);

    bool is_power() const noexcept { return points_.empty(); }
    double gamma() const noexcept { return gamma_; }
    const std::vector<std::pair<double, double>>& points() const noexcept { return points_; }

    std::string describe() const;

private:
    ProbabilityLaw() = default;
    double gamma_ = 1.0;
    std::vector<std::pair<double, double>> points_;
};

double evaluate_probability(const ProbabilityLaw& law, double rho, const ModelParams& params);

// Density where P crosses 1/2, or nullopt when the law never crosses it on [0, rho_max].
std::optional<double> critical_density(const ProbabilityLaw& law, const ModelParams& params);

}  // namespace ktraffic
