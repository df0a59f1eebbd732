#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ktraffic/errors.hpp"
#include "ktraffic/model.hpp"

using namespace ktraffic;
using Catch::Matchers::WithinAbs;

TEST_CASE("power law probability values") {
    const ModelParams p;
    const auto law = ProbabilityLaw::power(1.0);
    CHECK(evaluate_probability(law, 0.0, p) == 1.0);
    CHECK(evaluate_probability(law, 1.0, p) == 0.0);
    CHECK_THAT(evaluate_probability(law, 0.3, p), WithinAbs(0.7, 1e-15));
    CHECK_THAT(evaluate_probability(ProbabilityLaw::power(0.5), 0.25, p), WithinAbs(0.5, 1e-15));
}

TEST_CASE("probability stays in [0,1] and is non-increasing") {
    ModelParams p;
    p.rho_max = 2.0;
    for (double g : {0.1, 0.25, 0.75, 1.0}) {
        const auto law = ProbabilityLaw::power(g);
        double prev = 2.0;
        for (int i = 0; i <= 1000; ++i) {
            const double P = evaluate_probability(law, p.rho_max * i / 1000.0, p);
            REQUIRE(P >= 0.0);
            REQUIRE(P <= 1.0);
            REQUIRE(P <= prev);
            prev = P;
        }
    }
}

TEST_CASE("density outside [0, rho_max] is a domain error") {
    const ModelParams p;
    const auto law = ProbabilityLaw::power(1.0);
    CHECK_THROWS_AS(evaluate_probability(law, -0.1, p), DomainError);
    CHECK_THROWS_AS(evaluate_probability(law, 1.1, p), DomainError);
}

TEST_CASE("gamma must lie in (0,1]") {
    CHECK_THROWS_AS(ProbabilityLaw::power(0.0), ConfigError);
    CHECK_THROWS_AS(ProbabilityLaw::power(1.5), ConfigError);
    CHECK_NOTHROW(ProbabilityLaw::power(1.0));
}

TEST_CASE("critical density of the power law") {
    const ModelParams p;
    CHECK_THAT(*critical_density(ProbabilityLaw::power(1.0), p), WithinAbs(0.5, 1e-15));
    CHECK_THAT(*critical_density(ProbabilityLaw::power(0.5), p), WithinAbs(0.25, 1e-15));
    CHECK_THAT(*critical_density(ProbabilityLaw::power(0.25), p), WithinAbs(0.0625, 1e-15));
    for (double g : {0.1, 0.3, 0.75, 1.0}) {
        const auto law = ProbabilityLaw::power(g);
        CHECK_THAT(evaluate_probability(law, *critical_density(law, p), p), WithinAbs(0.5, 1e-12));
    }
}

TEST_CASE("tabulated law interpolates and bisects") {
    const ModelParams p;
    const auto law = ProbabilityLaw::table({{0.0, 1.0}, {0.2, 0.9}, {0.6, 0.3}, {1.0, 0.0}});
    CHECK_THAT(evaluate_probability(law, 0.1, p), WithinAbs(0.95, 1e-15));
    CHECK_THAT(evaluate_probability(law, 0.4, p), WithinAbs(0.6, 1e-15));
    // 0.9 - 1.5 (rho - 0.2) = 0.5
    CHECK_THAT(*critical_density(law, p), WithinAbs(0.2 + 0.4 / 1.5, 1e-12));

    const auto never = ProbabilityLaw::table({{0.0, 1.0}, {1.0, 0.6}});
    CHECK_FALSE(critical_density(never, p).has_value());

    CHECK_THROWS_AS(ProbabilityLaw::table({{0.0, 0.5}, {0.5, 0.7}}), ConfigError);
    CHECK_THROWS_AS(ProbabilityLaw::table({{0.1, 1.0}, {0.5, 0.7}}), ConfigError);
    CHECK_THROWS_AS(ProbabilityLaw::table({{0.0, 1.0}, {0.0, 0.7}}), ConfigError);
}

TEST_CASE("whole speed classes are detected") {
    ModelParams p;
    p.delta_v = 0.3;
    CHECK_NOTHROW(p.validate());
    CHECK_FALSE(p.whole_classes());
    CHECK_THROWS_AS(p.speed_classes(), ConfigError);
    p.delta_v = 1.5;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.delta_v = 0.2;
    CHECK(p.speed_classes() == 5);
    CHECK(make_params(4).speed_classes() == 4);
    p.eta = 0.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    CHECK(parse_kernel("chi") == Kernel::Chi);
    CHECK_THROWS_AS(parse_kernel("gamma"), ConfigError);
}
