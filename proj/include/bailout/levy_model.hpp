#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "bailout/rng.hpp"

namespace bailout {

// ---------------------------------------------------------------------------
// Jump size distributions (strictly positive sizes; sign applied by direction)
// ---------------------------------------------------------------------------

struct ExponentialSize {
    double mean = 1.0;
};
struct WeibullSize {
    double shape = 2.0;
    double scale = 1.0;
};
struct HalfNormalSize {
    double scale = 1.0;
};
struct FixedSize {
    double value = 1.0;
};

using JumpSizeDist = std::variant<ExponentialSize, WeibullSize, HalfNormalSize, FixedSize>;

constexpr double kHalfNormalMeanFactor = 0.7978845608028654;  // sqrt(2/pi)

inline double jump_size_mean(const JumpSizeDist& dist) {
    return std::visit(
        [](const auto& d) -> double {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, ExponentialSize>) {
                return d.mean;
            } else if constexpr (std::is_same_v<T, WeibullSize>) {
                return d.scale * std::tgamma(1.0 + 1.0 / d.shape);
            } else if constexpr (std::is_same_v<T, HalfNormalSize>) {
                return d.scale * kHalfNormalMeanFactor;
            } else {
                return d.value;
            }
        },
        dist);
}

inline double sample_jump_size(const JumpSizeDist& dist, StepRng& rng) {
    return std::visit(
        [&rng](const auto& d) -> double {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, ExponentialSize>) {
                return rng.exponential(d.mean);
            } else if constexpr (std::is_same_v<T, WeibullSize>) {
                return rng.weibull(d.shape, d.scale);
            } else if constexpr (std::is_same_v<T, HalfNormalSize>) {
                return rng.half_normal(d.scale);
            } else {
                return d.value;
            }
        },
        dist);
}

/// True when the family parameters define a valid distribution with finite mean.
inline bool jump_size_params_valid(const JumpSizeDist& dist) {
    return std::visit(
        [](const auto& d) -> bool {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, ExponentialSize>) {
                return d.mean > 0.0 && std::isfinite(d.mean);
            } else if constexpr (std::is_same_v<T, WeibullSize>) {
                return d.shape > 0.0 && d.scale > 0.0 && std::isfinite(d.shape) &&
                       std::isfinite(d.scale);
            } else if constexpr (std::is_same_v<T, HalfNormalSize>) {
                return d.scale > 0.0 && std::isfinite(d.scale);
            } else {
                return d.value > 0.0 && std::isfinite(d.value);
            }
        },
        dist);
}

// ---------------------------------------------------------------------------
// Model and problem types
// ---------------------------------------------------------------------------

enum class JumpDirection { up, down };

/// One finite-activity jump component of the surplus process.
struct JumpComponent {
    double rate = 1.0;  ///< events per unit time
    JumpDirection direction = JumpDirection::down;
    JumpSizeDist size_dist = ExponentialSize{};

    double signed_mean() const {
        const double m = jump_size_mean(size_dist);
        return direction == JumpDirection::up ? m : -m;
    }
};

/// Drift + Brownian + finite-activity jump mixture for one regime.
struct LevyModel {
    double drift = 0.0;   ///< per unit time; equals the bounded-variation drift
    double sigma = 0.0;   ///< diffusion volatility, >= 0
    std::vector<JumpComponent> jumps;

    bool bounded_variation() const { return sigma == 0.0; }

    /// E[X(1)] of the mixture.
    double mean_rate() const {
        double m = drift;
        for (const auto& j : jumps) m += j.rate * j.signed_mean();
        return m;
    }

    /// Total arrival rate of downward jumps, i.e. nu(-inf, 0).
    double down_jump_rate() const {
        double r = 0.0;
        for (const auto& j : jumps)
            if (j.direction == JumpDirection::down) r += j.rate;
        return r;
    }
};

/// Terminal payoff description: w, its right derivative, and the slope limit.
struct PayoffSpec {
    std::function<double(double)> w;
    std::function<double(double)> w_prime_plus;
    double w_prime_inf = 0.0;
};

inline PayoffSpec zero_payoff() {
    return {[](double) { return 0.0; }, [](double) { return 0.0; }, 0.0};
}

inline PayoffSpec linear_payoff(double slope) {
    return {[slope](double x) { return slope * x; }, [slope](double) { return slope; }, slope};
}

/// w(x) = slope * min(x, cap).
inline PayoffSpec capped_linear_payoff(double slope, double cap) {
    return {[slope, cap](double x) { return slope * std::min(x, cap); },
            [slope, cap](double x) { return x < cap ? slope : 0.0; }, 0.0};
}

/// One exponential-horizon control problem.
struct ProblemSpec {
    LevyModel model;
    double beta = 1.5;  ///< cost per unit injected capital, > 1
    double q = 0.05;    ///< discount rate, > 0
    double r = 0.1;     ///< termination rate, > 0
    PayoffSpec payoff = zero_payoff();

    double alpha() const { return q + r; }
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class ViolationCode {
    SIGMA_NEGATIVE,
    JUMP_RATE_NONPOSITIVE,
    JUMP_SIZE_PARAMS_INVALID,
    DRIFTLESS_COMPOUND_POISSON,
    DRIFT_NONFINITE,
    BETA_NOT_ABOVE_ONE,
    DISCOUNT_NONPOSITIVE,
    TERMINATION_RATE_NONPOSITIVE,
    PAYOFF_NOT_NONDECREASING,
    PAYOFF_NOT_CONCAVE,
    PAYOFF_INTEGRAL_MISMATCH,
    PAYOFF_SLOPE_AT_ZERO,
    PAYOFF_SLOPE_AT_INFINITY,
    MAP_GENERATOR_NEGATIVE,
    MAP_STATE_ABSORBING,
    MAP_DISCOUNT_NONPOSITIVE,
    MAP_SWITCH_JUMP_PARAMS_INVALID,
};

inline const char* to_string(ViolationCode code) {
    switch (code) {
        case ViolationCode::SIGMA_NEGATIVE: return "SIGMA_NEGATIVE";
        case ViolationCode::JUMP_RATE_NONPOSITIVE: return "JUMP_RATE_NONPOSITIVE";
        case ViolationCode::JUMP_SIZE_PARAMS_INVALID: return "JUMP_SIZE_PARAMS_INVALID";
        case ViolationCode::DRIFTLESS_COMPOUND_POISSON: return "DRIFTLESS_COMPOUND_POISSON";
        case ViolationCode::DRIFT_NONFINITE: return "DRIFT_NONFINITE";
        case ViolationCode::BETA_NOT_ABOVE_ONE: return "BETA_NOT_ABOVE_ONE";
        case ViolationCode::DISCOUNT_NONPOSITIVE: return "DISCOUNT_NONPOSITIVE";
        case ViolationCode::TERMINATION_RATE_NONPOSITIVE: return "TERMINATION_RATE_NONPOSITIVE";
        case ViolationCode::PAYOFF_NOT_NONDECREASING: return "PAYOFF_NOT_NONDECREASING";
        case ViolationCode::PAYOFF_NOT_CONCAVE: return "PAYOFF_NOT_CONCAVE";
        case ViolationCode::PAYOFF_INTEGRAL_MISMATCH: return "PAYOFF_INTEGRAL_MISMATCH";
        case ViolationCode::PAYOFF_SLOPE_AT_ZERO: return "PAYOFF_SLOPE_AT_ZERO";
        case ViolationCode::PAYOFF_SLOPE_AT_INFINITY: return "PAYOFF_SLOPE_AT_INFINITY";
        case ViolationCode::MAP_GENERATOR_NEGATIVE: return "MAP_GENERATOR_NEGATIVE";
        case ViolationCode::MAP_STATE_ABSORBING: return "MAP_STATE_ABSORBING";
        case ViolationCode::MAP_DISCOUNT_NONPOSITIVE: return "MAP_DISCOUNT_NONPOSITIVE";
        case ViolationCode::MAP_SWITCH_JUMP_PARAMS_INVALID:
            return "MAP_SWITCH_JUMP_PARAMS_INVALID";
    }
    return "UNKNOWN";
}

/// Violations are data, not exceptions: callers decide what is fatal.
struct Violation {
    ViolationCode code;
    std::string message;
};

inline std::vector<Violation> validate_model(const LevyModel& model) {
    std::vector<Violation> out;
    if (!(model.sigma >= 0.0) || !std::isfinite(model.sigma))
        out.push_back({ViolationCode::SIGMA_NEGATIVE, "sigma must be finite and >= 0"});
    if (!std::isfinite(model.drift))
        out.push_back({ViolationCode::DRIFT_NONFINITE, "drift must be finite"});
    for (std::size_t i = 0; i < model.jumps.size(); ++i) {
        const auto& j = model.jumps[i];
        if (!(j.rate > 0.0) || !std::isfinite(j.rate))
            out.push_back({ViolationCode::JUMP_RATE_NONPOSITIVE,
                           "jump component " + std::to_string(i) + ": rate must be > 0"});
        if (!jump_size_params_valid(j.size_dist))
            out.push_back({ViolationCode::JUMP_SIZE_PARAMS_INVALID,
                           "jump component " + std::to_string(i) +
                               ": size distribution parameters invalid or mean not finite"});
    }
    if (model.sigma == 0.0 && model.drift == 0.0)
        out.push_back({ViolationCode::DRIFTLESS_COMPOUND_POISSON,
                       "need sigma > 0 or drift != 0"});
    return out;
}

struct PayoffCheckOptions {
    double x_max = 50.0;          ///< upper end of the validation grid
    std::size_t grid_points = 1000;
    double slope_tol = 1e-9;      ///< tolerance on derivative monotonicity
};

/// Checks beta/q/r ranges and the payoff slope conditions on a grid.
/// Assumes the model itself already passed validate_model.
inline std::vector<Violation> validate_problem(const ProblemSpec& spec,
                                               const PayoffCheckOptions& opts = {}) {
    std::vector<Violation> out;
    if (!(spec.beta > 1.0))
        out.push_back({ViolationCode::BETA_NOT_ABOVE_ONE, "beta must be > 1"});
    if (!(spec.q > 0.0))
        out.push_back({ViolationCode::DISCOUNT_NONPOSITIVE, "q must be > 0"});
    if (!(spec.r > 0.0))
        out.push_back({ViolationCode::TERMINATION_RATE_NONPOSITIVE, "r must be > 0"});
    if (!out.empty()) return out;  // slope bounds below need valid alpha

    const double alpha = spec.alpha();
    const std::size_t n = opts.grid_points;
    const double h = opts.x_max / static_cast<double>(n - 1);

    bool nondecreasing = true;
    bool concave = true;
    double integral = spec.payoff.w(0.0);
    double max_abs_w = std::abs(integral);
    double prev_slope = spec.payoff.w_prime_plus(0.0);
    double prev_w = integral;
    double max_integral_gap = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
        const double x = static_cast<double>(i) * h;
        const double wx = spec.payoff.w(x);
        const double slope = spec.payoff.w_prime_plus(x);
        if (slope < -opts.slope_tol) nondecreasing = false;
        if (slope > prev_slope + opts.slope_tol) concave = false;
        if (wx < prev_w - opts.slope_tol * (1.0 + std::abs(prev_w))) nondecreasing = false;
        // trapezoid of w'_+ recovers w up to O(h) at kinks of the derivative
        integral += 0.5 * (prev_slope + slope) * h;
        max_integral_gap = std::max(max_integral_gap, std::abs(integral - wx));
        max_abs_w = std::max(max_abs_w, std::abs(wx));
        prev_slope = slope;
        prev_w = wx;
    }
    const double w0_slope = spec.payoff.w_prime_plus(0.0);
    const double integral_tol = 2.0 * h * std::max(1.0, w0_slope) + 1e-9 * (1.0 + max_abs_w);

    if (!nondecreasing)
        out.push_back({ViolationCode::PAYOFF_NOT_NONDECREASING,
                       "w or w'_+ indicates a decreasing payoff on the validation grid"});
    if (!concave)
        out.push_back({ViolationCode::PAYOFF_NOT_CONCAVE,
                       "w'_+ increases on the validation grid"});
    if (max_integral_gap > integral_tol)
        out.push_back({ViolationCode::PAYOFF_INTEGRAL_MISMATCH,
                       "integrating w'_+ does not recover w within tolerance"});
    if (w0_slope > spec.beta * alpha / spec.r + 1e-12)
        out.push_back({ViolationCode::PAYOFF_SLOPE_AT_ZERO,
                       "w'_+(0+) must be <= beta*alpha/r"});
    if (!(spec.payoff.w_prime_inf >= 0.0) || !(spec.payoff.w_prime_inf < alpha / spec.r))
        out.push_back({ViolationCode::PAYOFF_SLOPE_AT_INFINITY,
                       "w'_+(inf) must lie in [0, alpha/r)"});
    return out;
}

} // namespace bailout
