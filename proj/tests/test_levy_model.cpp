#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "bailout/levy_model.hpp"

using namespace bailout;

namespace {

bool has_code(const std::vector<Violation>& vs, ViolationCode code) {
    return std::any_of(vs.begin(), vs.end(),
                       [code](const Violation& v) { return v.code == code; });
}

LevyModel paper_regime0() {
    LevyModel m;
    m.drift = 1.5;
    m.sigma = 0.2;
    m.jumps = {{0.8, JumpDirection::up, WeibullSize{2.0, 1.0}},
               {0.2, JumpDirection::down, HalfNormalSize{1.0}}};
    return m;
}

} // namespace

TEST_CASE("driftless compound Poisson is rejected") {
    LevyModel m;
    m.drift = 0.0;
    m.sigma = 0.0;
    m.jumps = {{1.0, JumpDirection::down, ExponentialSize{1.0}}};
    const auto vs = validate_model(m);
    REQUIRE(vs.size() == 1);
    REQUIRE(vs[0].code == ViolationCode::DRIFTLESS_COMPOUND_POISSON);
}

TEST_CASE("reference mixture and plain Brownian motion validate") {
    REQUIRE(validate_model(paper_regime0()).empty());
    LevyModel bm;
    bm.drift = 0.0;
    bm.sigma = 1.0;
    REQUIRE(validate_model(bm).empty());
}

TEST_CASE("bad jump parameters are reported per component") {
    LevyModel m;
    m.drift = 1.0;
    m.jumps = {{-0.5, JumpDirection::up, ExponentialSize{1.0}},
               {0.5, JumpDirection::down, WeibullSize{-2.0, 1.0}}};
    const auto vs = validate_model(m);
    REQUIRE(has_code(vs, ViolationCode::JUMP_RATE_NONPOSITIVE));
    REQUIRE(has_code(vs, ViolationCode::JUMP_SIZE_PARAMS_INVALID));
}

TEST_CASE("validation is pure") {
    LevyModel m;
    m.sigma = -1.0;
    const auto a = validate_model(m);
    const auto b = validate_model(m);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].code == b[i].code);
        REQUIRE(a[i].message == b[i].message);
    }
}

TEST_CASE("zero payoff always satisfies the slope bounds") {
    ProblemSpec spec;
    spec.model.sigma = 1.0;
    spec.beta = 1.5;
    spec.q = 0.05;
    spec.r = 0.1;
    spec.payoff = zero_payoff();
    REQUIRE(validate_problem(spec).empty());
}

TEST_CASE("linear payoff slope bounds, both sides of the threshold") {
    ProblemSpec spec;
    spec.model.sigma = 1.0;
    spec.beta = 1.1;
    spec.q = 0.05;

    // w(x) = x, r = 2: w'_inf = 1 < alpha/r = 1.025 and w'(0) = 1 <= 1.1275
    spec.r = 2.0;
    spec.payoff = linear_payoff(1.0);
    REQUIRE(validate_problem(spec).empty());

    // w(x) = 2x, r = 3: w'_inf = 2 >= alpha/r ~ 1.0167
    spec.r = 3.0;
    spec.payoff = linear_payoff(2.0);
    const auto vs = validate_problem(spec);
    REQUIRE(has_code(vs, ViolationCode::PAYOFF_SLOPE_AT_INFINITY));
}

TEST_CASE("range checks on beta, q, r") {
    ProblemSpec spec;
    spec.model.sigma = 1.0;
    spec.beta = 1.0;
    spec.q = 0.0;
    spec.r = -1.0;
    const auto vs = validate_problem(spec);
    REQUIRE(has_code(vs, ViolationCode::BETA_NOT_ABOVE_ONE));
    REQUIRE(has_code(vs, ViolationCode::DISCOUNT_NONPOSITIVE));
    REQUIRE(has_code(vs, ViolationCode::TERMINATION_RATE_NONPOSITIVE));
}

TEST_CASE("convex payoff and inconsistent derivative are caught on the grid") {
    ProblemSpec spec;
    spec.model.sigma = 1.0;
    spec.beta = 2.0;
    spec.q = 1.0;
    spec.r = 0.1;

    spec.payoff = {[](double x) { return 0.001 * x * x; },
                   [](double x) { return 0.002 * x; }, 0.1};
    REQUIRE(has_code(validate_problem(spec), ViolationCode::PAYOFF_NOT_CONCAVE));

    spec.payoff = {[](double x) { return x; }, [](double) { return 0.0; }, 0.0};
    REQUIRE(has_code(validate_problem(spec), ViolationCode::PAYOFF_INTEGRAL_MISMATCH));
}

TEST_CASE("payoff slope at zero against beta alpha / r") {
    ProblemSpec spec;
    spec.model.sigma = 1.0;
    spec.beta = 1.2;
    spec.q = 0.05;
    spec.r = 1.0;  // beta*alpha/r = 1.26
    spec.payoff = capped_linear_payoff(1.5, 2.0);
    REQUIRE(has_code(validate_problem(spec), ViolationCode::PAYOFF_SLOPE_AT_ZERO));
    spec.payoff = capped_linear_payoff(1.2, 2.0);
    REQUIRE(validate_problem(spec).empty());
}
