#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bailout/diffusion_oracle.hpp"
#include "bailout/path_engine.hpp"
#include "bailout/single_solver.hpp"

using namespace bailout;

namespace {
constexpr double kArccosh2 = 1.3169578969248166;  // b* for mu=0, sigma^2=2, alpha=1, beta=2
}

TEST_CASE("scale function boundary values and the sinh special case") {
    const DiffusionSpec spec{0.0, std::sqrt(2.0), 1.0};
    REQUIRE(scale_functions(spec, 0.0).w == 0.0);
    REQUIRE(scale_functions(spec, 0.0).z == 1.0);
    for (double x : {0.1, 0.7, 1.9, 3.3}) {
        REQUIRE(scale_functions(spec, x).w == Catch::Approx(std::sinh(x)).epsilon(1e-12));
        REQUIRE(scale_functions(spec, x).z == Catch::Approx(std::cosh(x)).epsilon(1e-12));
    }
}

// (sigma^2/2) W'' + mu W' - alpha W = 0, checked two ways: with W'' built in
// the test from the quadratic roots (1e-8 relative), and with both
// derivatives from central differences so nothing closed-form is reused
// (1e-6, limited by FD cancellation).
TEST_CASE("scale function satisfies its ODE at 100 points") {
    const DiffusionSpec spec{0.4, 0.8, 0.9};
    const double s2 = spec.sigma * spec.sigma;
    const double disc = std::sqrt(spec.mu * spec.mu + 2.0 * spec.alpha * s2);
    const double tp = (-spec.mu + disc) / s2;
    const double tm = (spec.mu + disc) / s2;
    const double h = 1e-4;
    for (int i = 1; i <= 100; ++i) {
        const double x = 0.05 * i;
        const double w0 = scale_functions(spec, x).w;
        const double w1a = scale_functions(spec, x).w_prime;
        const double w2a = (tp * tp * std::exp(tp * x) - tm * tm * std::exp(-tm * x)) / disc;
        const double res_a = 0.5 * s2 * w2a + spec.mu * w1a - spec.alpha * w0;
        REQUIRE(std::abs(res_a) <= 1e-8 * std::max(1.0, std::abs(w0)));

        const double wm = scale_functions(spec, x - h).w;
        const double wp = scale_functions(spec, x + h).w;
        const double w2 = (wp - 2.0 * w0 + wm) / (h * h);
        const double w1 = (wp - wm) / (2.0 * h);
        const double res = 0.5 * s2 * w2 + spec.mu * w1 - spec.alpha * w0;
        REQUIRE(std::abs(res) <= 1e-6 * std::max(1.0, std::abs(w0)));
    }
}

// Defining property: int_0^inf e^{-lambda x} W(x) dx = 1 / (psi(lambda) - alpha)
// for lambda above the right root, psi(lambda) = mu lambda + sigma^2 lambda^2 / 2.
TEST_CASE("scale function Laplace transform") {
    const DiffusionSpec spec{-0.3, 1.1, 0.7};
    const auto psi = [&](double lam) {
        return spec.mu * lam + 0.5 * spec.sigma * spec.sigma * lam * lam;
    };
    const double theta_plus = detail::diffusion_roots(spec).theta_plus;
    for (double lam : {2.0, 2.5, 3.0}) {
        const double cutoff = 30.0 / (lam - theta_plus);  // e^{-(lam-theta+)x} tail
        const double integral = detail::integrate(
            [&](double x) { return std::exp(-lam * x) * scale_functions(spec, x).w; }, 0.0,
            cutoff, 1e-10);
        REQUIRE(integral == Catch::Approx(1.0 / (psi(lam) - spec.alpha)).epsilon(1e-6));
    }
}

TEST_CASE("reflected passage transform validated against direct Monte Carlo") {
    const DiffusionSpec spec{0.2, 0.5, 0.8};
    const double b = 0.7;
    LevyModel model;
    model.drift = spec.mu;
    model.sigma = spec.sigma;
    const double dt = 0.002;
    const PathBatch batch = simulate_batch(model, dt, 30.0, 4000, 555);
    std::vector<double> contrib(batch.n_paths);
    DiscountTable disc(spec.alpha, dt, batch.n_steps);
    for (std::size_t p = 0; p < batch.n_paths; ++p) {
        const ReflectedPath rp = reflect_upper(batch.path(p), b, b);
        const std::size_t kappa = first_passage(rp, 0.0);
        contrib[p] = kappa == kNever ? 0.0 : disc.d[kappa];
    }
    const MeanCi ci = mean_ci(contrib);
    const double closed = reflected_passage_transform(spec, b);
    // discrete reflection bias is O(sqrt(dt)); allow it on top of the CI
    const double bias_allowance = 1.2 * spec.sigma * std::sqrt(dt);
    REQUIRE(std::abs(ci.mean - closed) <= 3.0 * ci.half_width + bias_allowance);
}

TEST_CASE("oracle g at the boundary and at infinity") {
    const DiffusionSpec spec{0.1, 0.6, 0.9};
    const auto wp0 = [](double) { return 0.0; };
    const double beta = 1.7;
    REQUIRE(oracle_g(spec, 0.0, beta, 0.3, wp0) == Catch::Approx(beta));  // g(0) = beta
    REQUIRE(oracle_g(spec, 40.0, beta, 0.3, wp0) < 1e-3);                 // g(inf) = 0
    REQUIRE(oracle_g(spec, 1e4, beta, 0.3, wp0) >= 0.0);                  // overflow-safe
}

TEST_CASE("oracle g is monotone non-increasing in b") {
    const DiffusionSpec spec{0.3, 0.7, 0.6};
    const auto wp = [](double y) { return y < 2.0 ? 0.5 : 0.0; };
    double prev = 1e300;
    for (double b = 0.0; b <= 4.0; b += 0.25) {
        const double g = oracle_g(spec, b, 1.5, 0.3, wp);
        REQUIRE(g <= prev + 1e-10);
        prev = g;
    }
}

TEST_CASE("quadrature failure is reported when the tolerance cannot be met") {
    REQUIRE_THROWS_AS(
        detail::integrate([](double x) { return x < 0.337 ? 1.0 : 0.0; }, 0.0, 1.0, 1e-14, 3),
        QuadratureFailure);
}

TEST_CASE("HJB solve matches the closed form for the symmetric case") {
    const DiffusionSpec spec{0.0, std::sqrt(2.0), 1.0};
    const double beta = 2.0;
    const double b = 1.0;
    // v = c1 e^x + c2 e^{-x}, v'(0) = 2, v'(1) = 1
    const double e = std::exp(1.0);
    const double c1 = (1.0 - 2.0 / e) / (e - 1.0 / e);
    const double c2 = c1 - 2.0;
    const auto w = [](double) { return 0.0; };
    const HjbSolution sol = solve_hjb_ode(spec, beta, 0.5, w, b, UpperBc::neumann, 4000);
    double max_v = 0.0;
    for (double v : sol.v) max_v = std::max(max_v, std::abs(v));
    for (std::size_t i = 0; i < sol.x.size(); i += 257) {
        const double exact = c1 * std::exp(sol.x[i]) + c2 * std::exp(-sol.x[i]);
        REQUIRE(std::abs(sol.v[i] - exact) <= 1e-8 * std::max(1.0, max_v));
    }
    REQUIRE(sol.residual_norm <= 1e-6 * max_v);
    REQUIRE(sol.slope0 == Catch::Approx(beta).margin(1e-5));
    REQUIRE(sol.slope_b == Catch::Approx(1.0).margin(1e-5));
}

TEST_CASE("two independent b* methods agree to 1e-6") {
    const DiffusionSpec spec{0.0, std::sqrt(2.0), 1.0};
    const auto wp = [](double) { return 0.0; };
    const auto w = [](double) { return 0.0; };
    const double from_g = oracle_bstar(spec, 2.0, 0.5, wp);
    const double from_fit = oracle_bstar_smooth_fit(spec, 2.0, 0.5, w, 1e-9);
    REQUIRE(from_g == Catch::Approx(kArccosh2).margin(1e-7));
    REQUIRE(from_fit == Catch::Approx(kArccosh2).margin(1e-6));
    REQUIRE(std::abs(from_g - from_fit) <= 1e-6);
}

TEST_CASE("value at the oracle barrier is concave with slopes in [1, beta]") {
    const DiffusionSpec spec{0.2, 0.9, 0.8};
    const double beta = 1.8;
    const double r = 0.4;
    const auto w = [](double x) { return std::min(x, 2.0); };
    const auto wp = [](double x) { return x < 2.0 ? 1.0 : 0.0; };
    const double bstar = oracle_bstar(spec, beta, r, wp);
    const HjbSolution sol = solve_hjb_ode(spec, beta, r, w, bstar);
    double prev_slope = 1e300;
    for (std::size_t i = 1; i < sol.x.size(); ++i) {
        const double s = (sol.v[i] - sol.v[i - 1]) / (sol.x[i] - sol.x[i - 1]);
        REQUIRE(s <= prev_slope + 1e-9);
        REQUIRE(s >= 1.0 - 1e-4);
        REQUIRE(s <= beta + 1e-4);
        prev_slope = s;
    }
}

TEST_CASE("smooth fit holds at the oracle barrier") {
    const DiffusionSpec spec{0.3, 0.8, 0.9};
    const double beta = 1.6;
    const double r = 0.45;
    const auto w = [](double x) { return std::min(x, 2.0); };
    const auto wp = [](double x) { return x < 2.0 ? 1.0 : 0.0; };
    const double bstar = oracle_bstar(spec, beta, r, wp);
    const auto coarse = solve_hjb_ode(spec, beta, r, w, bstar, UpperBc::smooth_fit, 1000);
    const auto fine = solve_hjb_ode(spec, beta, r, w, bstar, UpperBc::smooth_fit, 2000);
    const double free_slope = (4.0 * fine.slope_b - coarse.slope_b) / 3.0;
    REQUIRE(std::abs(free_slope - 1.0) <= 1e-4);
}

TEST_CASE("b* moves the right way in beta and alpha") {
    const auto wp = [](double) { return 0.0; };
    double prev = 0.0;
    for (double beta : {1.1, 1.5, 2.0, 3.0}) {
        const double b = oracle_bstar({0.1, 0.7, 1.0}, beta, 0.5, wp);
        REQUIRE(b > prev);  // dearer injections push the barrier up
        prev = b;
    }
    const double loose = oracle_bstar({0.1, 0.7, 1.0}, 2.0, 0.5, wp);
    const double tight = oracle_bstar({0.1, 0.7, 10.0}, 2.0, 5.0, wp);
    REQUIRE(tight < loose);  // heavier killing shortens the effective horizon
}
