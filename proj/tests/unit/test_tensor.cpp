#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "ktraffic/errors.hpp"
#include "ktraffic/tensor.hpp"
#include "oracles.hpp"

using namespace ktraffic;
using Catch::Matchers::WithinAbs;

namespace {

struct Built {
    VelocityGrid grid;
    GridRatio ratio;
};

Built setup(int T, double r) {
    const auto p = make_params(T);
    auto g = build_grid(p, r);
    return {g, grid_ratio(p, g)};
}

double max_diff(const TransferWeights& w, const oracle::Table& o) {
    double d = 0.0;
    for (std::size_t h = 0; h < w.size(); ++h)
        for (std::size_t j = 0; j < w.size(); ++j) d = std::max(d, std::abs(w[h][j] - o[h + 1][j + 1]));
    return d;
}

}  // namespace

TEST_CASE("integer δ tensor, T=3 r=1 P=0.4") {
    const auto [g, ratio] = setup(3, 1.0);
    const auto t = build_delta_tensor_integer(g, ratio, 0.4);
    // matrix j=2 (index 1), row 1 (index 0): acceleration from the rest cell on every column
    for (std::size_t k = 0; k < 4; ++k) CHECK_THAT(t.entry(1, 0, k), WithinAbs(0.4, 1e-15));

    const double P = 0.3;
    const auto t1 = build_delta_tensor_integer(g, ratio, P);
    const auto a = t1.dense(0);
    for (std::size_t h = 0; h < 4; ++h)
        for (std::size_t k = 0; k < 4; ++k) {
            const bool keep = (h == 0 && k == 0) || (h == 0 && k > 0) || (k == 0 && h > 0);
            CHECK_THAT(a[h][k], WithinAbs(keep ? 1 - P : 0.0, 1e-15));
        }
    // false gain element of the last matrix
    CHECK_THAT(t1.entry(3, 3, 3), WithinAbs((1 - P) + P, 1e-15));
}

TEST_CASE("integer δ sparsity pattern") {
    for (int T : {2, 3, 5})
        for (int r : {1, 2, 4}) {
            const auto [g, ratio] = setup(T, r);
            const auto t = build_delta_tensor_integer(g, ratio, 0.35);
            const std::size_t n = g.size();
            for (std::size_t j = static_cast<std::size_t>(r) + 1; j + 1 < n; ++j) {
                const auto a = t.dense(j);
                for (std::size_t h = 0; h < n; ++h)
                    for (std::size_t k = 0; k < n; ++k) {
                        const bool allowed = (h == j && k >= j) || (k == j && h >= j) || h == j - r;
                        if (!allowed) REQUIRE(a[h][k] == 0.0);
                    }
            }
        }
}

TEST_CASE("generic δ builder is bit-identical to the integer builder for integer r") {
    for (int T : {1, 3, 5})
        for (int r : {1, 2, 4, 20}) {
            const auto [g, ratio] = setup(T, r);
            const auto a = build_delta_tensor_integer(g, ratio, 0.37);
            const auto b = build_delta_tensor_generic(g, ratio, 0.37);
            REQUIRE(a.size() == b.size());
            for (std::size_t j = 0; j < a.size(); ++j) {
                const auto& ma = a.matrices[j];
                const auto& mb = b.matrices[j];
                REQUIRE(ma.entries.size() == mb.entries.size());
                REQUIRE(ma.rows.size() == mb.rows.size());
                for (std::size_t i = 0; i < ma.entries.size(); ++i) {
                    REQUIRE(ma.entries[i].row == mb.entries[i].row);
                    REQUIRE(ma.entries[i].col == mb.entries[i].col);
                    REQUIRE(ma.entries[i].value == mb.entries[i].value);
                }
                for (std::size_t i = 0; i < ma.rows.size(); ++i) {
                    REQUIRE(ma.rows[i].row == mb.rows[i].row);
                    REQUIRE(ma.rows[i].value == mb.rows[i].value);
                }
            }
        }
}

TEST_CASE("generic δ weights match the closed-form coefficient table") {
    struct Case {
        int T;
        int n_cells;
    };
    // r = 14/3, 7/2 (tie: v = delta_v on a cell boundary), 5/2, 3/2, 4/3, 12/5, 13/5
    const Case cases[] = {{3, 15}, {2, 8}, {4, 15}, {2, 6}, {2, 4}, {3, 5}, {5, 13}, {5, 14}, {3, 30}, {5, 60}};
    for (const auto& c : cases) {
        const auto p = make_params(c.T);
        const VelocityGrid g(static_cast<std::size_t>(c.n_cells), 1.0);
        const auto ratio = grid_ratio(p, g);
        INFO("T=" << c.T << " N=" << c.n_cells << " r=" << ratio.r);
        const auto w = delta_transfer_weights(g, ratio);
        CHECK(max_diff(w, oracle::delta_closed_form(c.n_cells, ratio.r)) <= 1e-13);
        CHECK(max_diff(w, oracle::delta_sampled(c.n_cells, ratio.r, 30000)) <= 1e-4);
    }
}

TEST_CASE("χ weights match the coefficient table for T >= 3") {
    for (int T : {3, 4, 5})
        for (int r : {1, 2, 3, 4, 8, 20}) {
            const auto [g, ratio] = setup(T, r);
            INFO("T=" << T << " r=" << r);
            CHECK(max_diff(chi_transfer_weights(g, ratio), oracle::chi_closed_form(static_cast<int>(g.size()), r)) <=
                  1e-13);
        }
}

TEST_CASE("χ weights match quadrature on every lattice") {
    for (int T : {1, 2, 3, 5})
        for (int r : {1, 2, 4, 7}) {
            const auto [g, ratio] = setup(T, r);
            INFO("T=" << T << " r=" << r);
            CHECK(max_diff(chi_transfer_weights(g, ratio), oracle::chi_sampled(static_cast<int>(g.size()), r, 4000)) <=
                  1e-6);
        }
}

TEST_CASE("χ top-cell coefficient for r=1") {
    const auto [g, ratio] = setup(4, 1.0);
    const auto t = build_chi_tensor(g, ratio, 0.6);
    const std::size_t N = g.size();
    const auto& m = t.matrices[N - 1];
    double row_nr = 0.0, row_n = 0.0;
    for (const auto& rw : m.rows) {
        if (rw.row == N - 2) row_nr += rw.value;
        if (rw.row == N - 1) row_n += rw.value;
    }
    CHECK_THAT(row_nr, WithinAbs(0.6 * (1.0 / 8 + 0.5 * std::log(2.0)), 1e-14));
    CHECK_THAT(row_n, WithinAbs(0.6, 1e-15));
}

TEST_CASE("every tensor is stochastic and non-negative") {
    for (int T : {1, 2, 3, 5})
        for (int r : {1, 2, 4, 20})
            for (double P : {0.0, 0.25, 0.5, 1.0}) {
                const auto [g, ratio] = setup(T, r);
                for (const auto& t : {build_delta_tensor_integer(g, ratio, P), build_chi_tensor(g, ratio, P)}) {
                    const auto rep = verify_stochasticity(t);
                    INFO("T=" << T << " r=" << r << " P=" << P << " dev=" << rep.max_deviation);
                    CHECK(rep.pass);
                    CHECK(rep.min_entry >= 0.0);
                }
            }
}

TEST_CASE("stochasticity check locates an injected fault") {
    const auto [g, ratio] = setup(3, 2.0);
    auto t = build_delta_tensor_integer(g, ratio, 0.4);
    t.matrices[3].entries.push_back({5, 2, 1e-6});
    const auto rep = verify_stochasticity(t, 1e-12);
    CHECK_FALSE(rep.pass);
    CHECK(rep.worst_row == 5);
    CHECK(rep.worst_col == 2);
    CHECK_THAT(rep.max_deviation, WithinAbs(1e-6, 1e-15));
}

TEST_CASE("χ tensor shares the braking block of the δ tensor") {
    const auto [g, ratio] = setup(3, 4.0);
    const auto d = build_delta_tensor_integer(g, ratio, 0.45);
    const auto c = build_chi_tensor(g, ratio, 0.45);
    CHECK(c.kernel == Kernel::Chi);
    for (std::size_t j = 0; j < g.size(); ++j) {
        REQUIRE(d.matrices[j].entries.size() == c.matrices[j].entries.size());
        for (std::size_t i = 0; i < d.matrices[j].entries.size(); ++i)
            CHECK(d.matrices[j].entries[i].value == c.matrices[j].entries[i].value);
    }
}

TEST_CASE("χ matrix A^1 approaches the δ one as r grows") {
    double prev = 1.0;
    for (int r : {1, 2, 4, 8, 16, 32}) {
        const auto [g, ratio] = setup(3, r);
        const auto d = build_delta_tensor_integer(g, ratio, 0.5).dense(0);
        const auto c = build_chi_tensor(g, ratio, 0.5).dense(0);
        double diff = 0.0;
        for (std::size_t h = 0; h < g.size(); ++h)
            for (std::size_t k = 0; k < g.size(); ++k) diff = std::max(diff, std::abs(d[h][k] - c[h][k]));
        CHECK_THAT(diff, WithinAbs(0.5 / (4.0 * r), 1e-15));
        CHECK(diff < prev);
        prev = diff;
    }
}

TEST_CASE("builders reject unsupported ratios") {
    const auto [g, ratio] = setup(3, 14.0 / 3.0);
    CHECK_THROWS_AS(build_delta_tensor_integer(g, ratio, 0.4), ConfigError);
    CHECK_THROWS_AS(build_chi_tensor(g, ratio, 0.4), ConfigError);
    CHECK_THROWS_AS(build_delta_tensor_generic(g, ratio, 1.4), DomainError);
    CHECK(verify_stochasticity(build_tensor(Kernel::Delta, g, ratio, 0.4)).pass);
}

TEST_CASE("tensor dump lists nonzero entries with 1-based indices") {
    const auto [g, ratio] = setup(1, 1.0);
    std::ostringstream os;
    write_tensor(os, build_delta_tensor_integer(g, ratio, 0.25));
    // N=2: A^1 has (1,1),(1,2),(2,1) = 0.75; A^2 has (2,2) = 1 and row 1 = 0.25
    CHECK(os.str() ==
          "j,h,k,value\n"
          "1,1,1,0.75\n1,1,2,0.75\n1,2,1,0.75\n"
          "2,1,1,0.25\n2,1,2,0.25\n2,2,1,0.25\n2,2,2,1\n");
}
