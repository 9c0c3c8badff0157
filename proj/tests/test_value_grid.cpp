#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bailout/value_grid.hpp"

using namespace bailout;

TEST_CASE("knot grid covers [0, x_max] with growing spacing") {
    const auto knots = make_knot_grid(101, 5.0, 1.04);
    REQUIRE(knots.size() == 101);
    REQUIRE(knots.front() == 0.0);
    REQUIRE(knots.back() == 5.0);
    for (std::size_t i = 1; i < knots.size(); ++i) REQUIRE(knots[i] > knots[i - 1]);
    const double first = knots[1] - knots[0];
    const double last = knots[100] - knots[99];
    REQUIRE(last > 10.0 * first);  // geometric refinement near 0
}

TEST_CASE("piecewise linear evaluation, tail, and walking hint") {
    PiecewiseLinear f;
    f.knots = {0.0, 1.0, 3.0};
    f.values = {1.0, 2.0, 2.5};
    f.tail_slope = 0.1;

    std::size_t hint = 0;
    REQUIRE(f.eval(0.0, hint) == 1.0);
    REQUIRE(f.eval(0.5, hint) == Catch::Approx(1.5));
    REQUIRE(f.eval(2.0, hint) == Catch::Approx(2.25));
    REQUIRE(f.eval(5.0, hint) == Catch::Approx(2.5 + 2.0 * 0.1));
    REQUIRE(f.eval(0.25, hint) == Catch::Approx(1.25));  // hint walks back down

    hint = 0;
    REQUIRE(f.slope_plus(0.0, hint) == Catch::Approx(1.0));
    REQUIRE(f.slope_plus(1.0, hint) == Catch::Approx(0.25));  // right derivative at knot
    REQUIRE(f.slope_plus(2.9, hint) == Catch::Approx(0.25));
    REQUIRE(f.slope_plus(3.0, hint) == Catch::Approx(0.1));
    REQUIRE(f.slope_plus(10.0, hint) == Catch::Approx(0.1));
}

TEST_CASE("pav projection pools violators and preserves monotone input") {
    const std::vector<double> w = {1.0, 1.0, 1.0, 1.0};
    const std::vector<double> mono = {4.0, 3.0, 2.0, 1.0};
    REQUIRE(pav_nonincreasing(mono, w) == mono);

    const std::vector<double> viol = {1.0, 3.0, 2.0, 0.0};
    const auto proj = pav_nonincreasing(viol, w);
    REQUIRE(proj[0] == Catch::Approx(2.0));  // first three pool to their mean
    REQUIRE(proj[0] == proj[1]);
    REQUIRE(proj[1] == proj[2]);
    REQUIRE(proj[3] == Catch::Approx(0.0));
    for (std::size_t i = 1; i < proj.size(); ++i) REQUIRE(proj[i] <= proj[i - 1]);
}

TEST_CASE("concavity projection anchors x = 0 and respects the slope cap") {
    ValueGrid g;
    g.knots = {0.0, 1.0, 2.0, 3.0};
    g.values = {{0.0, 0.5, 1.7, 2.0}};  // slope jumps 0.5 -> 1.2: not concave
    g.tail_slope = {0.3};
    REQUIRE(g.max_concavity_violation() > 0.0);
    g.project_concave(0, 1.2);
    REQUIRE(g.values[0][0] == 0.0);
    REQUIRE(g.max_concavity_violation() <= 1e-12);
    double prev = 1e300;
    for (std::size_t k = 0; k + 1 < g.knots.size(); ++k) {
        const double s = g.values[0][k + 1] - g.values[0][k];
        REQUIRE(s <= 1.2);
        REQUIRE(s >= 0.0);
        REQUIRE(s <= prev + 1e-15);
        prev = s;
    }
    REQUIRE(g.tail_slope[0] <= prev + 1e-15);
}

TEST_CASE("b-norm and sup-diff") {
    ValueGrid a = affine_grid(2, {0.0, 1.0, 2.0});
    REQUIRE(a.b_norm() == Catch::Approx(1.0));
    ValueGrid b = a;
    b.values[1][2] += 0.25;
    REQUIRE(a.sup_diff(b) == Catch::Approx(0.25));
    REQUIRE(a.eval(0, 1.5) == Catch::Approx(1.5));
    REQUIRE(a.eval(0, 7.5) == Catch::Approx(7.5));  // linear tail
}
