#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <sstream>

#include "ktraffic/equilibrium.hpp"
#include "ktraffic/errors.hpp"
#include "ktraffic/tensor.hpp"
#include "oracles.hpp"

using namespace ktraffic;
using Catch::Matchers::WithinAbs;

TEST_CASE("hand-solved equilibrium rho=0.6, P=0.4, T=3") {
    const auto eq = closed_form_equilibrium(0.6, 0.4, 3);
    REQUIRE(eq.classes() == 4);
    // class 2 solves f^2 + 0.2 f - 0.08 = 0
    CHECK_THAT(eq.masses[0], WithinAbs(0.2, 1e-15));
    CHECK_THAT(eq.masses[1], WithinAbs(0.2, 1e-15));
    CHECK_THAT(eq.masses[2], WithinAbs(0.112311, 1e-6));
    CHECK_THAT(eq.masses[3], WithinAbs(0.087689, 1e-6));
    // class 3 solves 0.6 f^2 + 0.36 f - 0.048 = 0
    CHECK_THAT(eq.masses[2], WithinAbs((-0.36 + std::sqrt(0.36 * 0.36 + 4 * 0.6 * 0.048)) / 1.2, 1e-15));
}

TEST_CASE("free phase keeps all vehicles at the top speed") {
    for (int T : {1, 3, 6}) {
        const auto eq = closed_form_equilibrium(0.3, 0.7, T);
        for (int l = 0; l < T; ++l) CHECK(eq.masses[static_cast<std::size_t>(l)] == 0.0);
        CHECK(eq.masses.back() == 0.3);
    }
    CHECK(closed_form_equilibrium(0.5, 0.5, 3).masses.back() == 0.5);
}

TEST_CASE("closed form agrees with the naive quadratic formula") {
    for (int T : {1, 2, 3, 5, 8})
        for (double rho : {0.05, 0.3, 0.51, 0.7, 0.95, 1.0})
            for (double P : {0.0, 0.1, 0.3, 0.45, 0.49}) {
                const auto eq = closed_form_equilibrium(rho, P, T);
                const auto ref = oracle::equilibrium_naive(rho, P, T);
                for (std::size_t l = 0; l < ref.size(); ++l) CHECK_THAT(eq.masses[l], WithinAbs(ref[l], 1e-13));
                const double total = std::accumulate(eq.masses.begin(), eq.masses.end(), 0.0);
                CHECK_THAT(total, WithinAbs(rho, 1e-12));
                for (double m : eq.masses) CHECK(m >= 0.0);
            }
}

TEST_CASE("lowest class vanishes continuously as P approaches 1/2") {
    double prev = 1.0;
    for (double gap : {1e-2, 1e-4, 1e-8, 1e-12}) {
        const auto eq = closed_form_equilibrium(0.5, 0.5 - gap, 4);
        CHECK(eq.masses[0] < prev);
        prev = eq.masses[0];
        CHECK(eq.masses[0] <= 4 * gap);
    }
}

TEST_CASE("second root of every recursion step is negative") {
    for (double rho : {0.2, 0.6, 1.0})
        for (double P : {0.05, 0.25, 0.49}) {
            const auto eq = closed_form_equilibrium(rho, P, 6);
            double below = eq.masses[0];
            for (int l = 1; l < 6; ++l) {
                const double S = ((1 - 2 * P) * rho - 2 * (1 - P) * below) / (1 - P);
                CHECK(S < 0.0);
                below += eq.masses[static_cast<std::size_t>(l)];
            }
        }
}

TEST_CASE("equilibrium mapped on a grid") {
    const auto eq = closed_form_equilibrium(0.6, 0.4, 3);
    CHECK(equilibrium_on_grid(eq, 1) == eq.masses);
    const auto f = equilibrium_on_grid(eq, 2);
    REQUIRE(f.size() == 7);
    for (std::size_t j = 0; j < 7; ++j) CHECK(f[j] == (j % 2 == 0 ? eq.masses[j / 2] : 0.0));
}

TEST_CASE("shifted profile is a fixed point") {
    const double rho = 0.7, P = 0.3;
    const int T = 4, r = 4;
    const auto p = make_params(T);
    const auto g = build_grid(p, r);
    const auto t = build_delta_tensor_integer(g, grid_ratio(p, g), P);
    for (int jbar = 1; jbar < r; ++jbar) {
        const auto f = unstable_equilibrium(rho, P, T, r, jbar);
        CHECK_THAT(std::accumulate(f.begin(), f.end(), 0.0), WithinAbs(rho, 1e-15));
        CHECK(f[0] == 0.0);
        const auto gvec = collision_rhs(f, t, 1.0);
        for (double v : gvec) CHECK(std::abs(v) <= 1e-10);
    }
    CHECK_THROWS_AS(unstable_equilibrium(rho, P, T, r, 4), DomainError);
    CHECK_THROWS_AS(unstable_equilibrium(rho, P, T, r, 0), DomainError);
}

TEST_CASE("quantized support report") {
    const auto eq = closed_form_equilibrium(0.6, 0.4, 3);
    const auto p = make_params(3);
    const auto g = build_grid(p, 4);
    const auto rep = verify_quantized_support(equilibrium_on_grid(eq, 4), g, p.delta_v, 1e-9, g.dv());
    CHECK(rep.pass);
    REQUIRE(rep.clusters.size() == 4);
    CHECK_THAT(rep.clusters[1].center, WithinAbs(1.0 / 3, 1e-15));
    CHECK_THAT(rep.clusters[0].center, WithinAbs(g.dv() / 4, 1e-15));

    CellMassVector spread(g.size(), 0.6 / g.size());
    const auto bad = verify_quantized_support(spread, g, p.delta_v, 1e-3, g.dv());
    CHECK_FALSE(bad.pass);
    CHECK(bad.clusters.size() == 1);
}

TEST_CASE("equilibrium CSV") {
    std::ostringstream os;
    write_equilibrium_csv(os, closed_form_equilibrium(0.3, 0.7, 2), 0.5);
    CHECK(os.str() == "class,speed,mass\n1,0,0\n2,0.5,0\n3,1,0.29999999999999999\n");
}
