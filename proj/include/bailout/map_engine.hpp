#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "bailout/levy_model.hpp"
#include "bailout/parallel.hpp"
#include "bailout/path_engine.hpp"
#include "bailout/single_solver.hpp"
#include "bailout/value_grid.hpp"

namespace bailout {

// ---------------------------------------------------------------------------
// Markov additive model
// ---------------------------------------------------------------------------

struct PointMassJump {
    double value = 0.0;
};
struct GaussianJump {
    double mean = 0.0;
    double sd = 1.0;
};
struct SignedExponentialJump {
    double mean = 1.0;
    JumpDirection direction = JumpDirection::down;
};

/// Switch-jump distribution F_ij; the point mass at 0 is the "no jump" case.
using SwitchJumpDist = std::variant<PointMassJump, GaussianJump, SignedExponentialJump>;

inline bool switch_jump_params_valid(const SwitchJumpDist& dist) {
    return std::visit(
        [](const auto& d) -> bool {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, PointMassJump>) {
                return std::isfinite(d.value);
            } else if constexpr (std::is_same_v<T, GaussianJump>) {
                return std::isfinite(d.mean) && d.sd >= 0.0 && std::isfinite(d.sd);
            } else {
                return d.mean > 0.0 && std::isfinite(d.mean);
            }
        },
        dist);
}

inline double sample_switch_jump(const SwitchJumpDist& dist, StepRng& rng) {
    return std::visit(
        [&rng](const auto& d) -> double {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, PointMassJump>) {
                return d.value;
            } else if constexpr (std::is_same_v<T, GaussianJump>) {
                return d.mean + d.sd * rng.normal();
            } else {
                const double v = rng.exponential(d.mean);
                return d.direction == JumpDirection::up ? v : -v;
            }
        },
        dist);
}

/// Markov-modulated model: per-state Levy dynamics and discounting, generator
/// Q, switch-jump distributions, and one injection cost beta.
struct MapModel {
    std::vector<LevyModel> models;
    std::vector<double> q_disc;                          ///< per-state discount, > 0
    std::vector<std::vector<double>> q;                  ///< off-diagonal rates q[i][j]
    std::vector<std::vector<SwitchJumpDist>> switch_jump;  ///< [i][j]
    double beta = 1.2;

    std::size_t n_states() const { return models.size(); }

    double switch_rate(std::size_t i) const {
        double total = 0.0;
        for (std::size_t j = 0; j < q[i].size(); ++j)
            if (j != i) total += q[i][j];
        return total;
    }

    double alpha(std::size_t i) const { return q_disc[i] + switch_rate(i); }
};

inline std::vector<Violation> validate_map_model(const MapModel& model) {
    std::vector<Violation> out;
    const std::size_t n = model.n_states();
    if (!(model.beta > 1.0))
        out.push_back({ViolationCode::BETA_NOT_ABOVE_ONE, "beta must be > 1"});
    for (std::size_t i = 0; i < n; ++i) {
        for (auto v : validate_model(model.models[i])) {
            v.message = "state " + std::to_string(i) + ": " + v.message;
            out.push_back(v);
        }
        if (!(model.q_disc[i] > 0.0))
            out.push_back({ViolationCode::MAP_DISCOUNT_NONPOSITIVE,
                           "state " + std::to_string(i) + ": q_disc must be > 0"});
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            if (model.q[i][j] < 0.0)
                out.push_back({ViolationCode::MAP_GENERATOR_NEGATIVE,
                               "q[" + std::to_string(i) + "][" + std::to_string(j) +
                                   "] must be >= 0"});
            if (!switch_jump_params_valid(model.switch_jump[i][j]))
                out.push_back({ViolationCode::MAP_SWITCH_JUMP_PARAMS_INVALID,
                               "switch jump " + std::to_string(i) + "->" + std::to_string(j) +
                                   " has invalid parameters"});
        }
        if (!(model.switch_rate(i) > 0.0))
            out.push_back({ViolationCode::MAP_STATE_ABSORBING,
                           "state " + std::to_string(i) +
                               ": total switch rate must be > 0 for the iteration"});
    }
    return out;
}

/// K = max_i E_(0,i)[e^{-q(i) zeta}] = max_i q_i / (q_i + q_disc(i)), the
/// contraction constant of T_b.
inline double contraction_constant(const MapModel& model) {
    double k = 0.0;
    for (std::size_t i = 0; i < model.n_states(); ++i) {
        const double qi = model.switch_rate(i);
        k = std::max(k, qi / (qi + model.q_disc[i]));
    }
    return k;
}

// ---------------------------------------------------------------------------
// hat-transform
// ---------------------------------------------------------------------------

namespace detail {

/// Gauss-Legendre nodes/weights on [-1, 1], computed once per order.
inline const std::pair<std::vector<double>, std::vector<double>>& gauss_legendre_256() {
    static const auto table = [] {
        constexpr std::size_t n = 256;
        std::vector<double> nodes(n), weights(n);
        for (std::size_t i = 0; i < n; ++i) {
            // Newton from the Chebyshev-like initial guess
            double x = std::cos(3.14159265358979323846 * (static_cast<double>(i) + 0.75) /
                                (static_cast<double>(n) + 0.5));
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = x;
                for (std::size_t k = 2; k <= n; ++k) {
                    const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = pk;
                }
                const double deriv = n * (x * p1 - p0) / (x * x - 1.0);
                const double dx = p1 / deriv;
                x -= dx;
                if (std::abs(dx) < 1e-15) break;
            }
            double p0 = 1.0, p1 = x;
            for (std::size_t k = 2; k <= n; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            const double deriv = n * (x * p1 - p0) / (x * x - 1.0);
            nodes[n - 1 - i] = x;
            weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * deriv * deriv);
        }
        return std::make_pair(nodes, weights);
    }();
    return table;
}

/// Integral of integrand(y) * pdf(y) over [a, b] by 256-point Gauss-Legendre,
/// split at the payoff kink y = kink when it lies inside.
template <class Fn, class Pdf>
double gl_expectation(const Fn& integrand, const Pdf& pdf, double a, double b, double kink) {
    const auto& [nodes, weights] = gauss_legendre_256();
    auto piece = [&](double lo, double hi) {
        if (hi <= lo) return 0.0;
        const double mid = 0.5 * (lo + hi);
        const double half = 0.5 * (hi - lo);
        double acc = 0.0;
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            const double y = mid + half * nodes[k];
            acc += weights[k] * integrand(y) * pdf(y);
        }
        return acc * half;
    };
    if (kink > a && kink < b) return piece(a, kink) + piece(kink, b);
    return piece(a, b);
}

} // namespace detail

/**
 * The expected continuation payoff at a regime switch out of state i:
 * hat f(x, i) = sum_{j != i} (q_ij / q_i) E[ (beta (x+J) + f(0,j)) 1{x+J <= 0}
 *                                            + f(x+J, j) 1{x+J > 0} ].
 * Discrete jumps are evaluated exactly; continuous ones by 256-point
 * Gauss-Legendre on a support covering all but 1e-6 of the mass.
 */
inline PiecewiseLinear hat_transform(const ValueGrid& f, const MapModel& model,
                                     std::size_t state) {
    const double qi = model.switch_rate(state);
    if (!(qi > 0.0)) throw std::invalid_argument("hat_transform needs switch rate > 0");
    PiecewiseLinear out;
    out.knots = f.knots;
    out.values.assign(f.knots.size(), 0.0);
    double tail = 0.0;

    for (std::size_t j = 0; j < model.n_states(); ++j) {
        if (j == state || !(model.q[state][j] > 0.0)) continue;
        const double weight = model.q[state][j] / qi;
        const PiecewiseLinear fj = f.slice(j);
        const double f0 = fj.values[0];
        auto cont = [&](double z, std::size_t& hint) {
            return z <= 0.0 ? model.beta * z + f0 : fj.eval(z, hint);
        };

        std::visit(
            [&](const auto& d) {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, PointMassJump>) {
                    std::size_t hint = 0;
                    for (std::size_t k = 0; k < out.knots.size(); ++k)
                        out.values[k] += weight * cont(out.knots[k] + d.value, hint);
                } else if constexpr (std::is_same_v<T, GaussianJump>) {
                    const double lo = d.mean - 5.0 * d.sd;
                    const double hi = d.mean + 5.0 * d.sd;
                    const double inv = 1.0 / (d.sd * 2.5066282746310002);
                    auto pdf = [&](double y) {
                        const double t = (y - d.mean) / d.sd;
                        return inv * std::exp(-0.5 * t * t);
                    };
                    for (std::size_t k = 0; k < out.knots.size(); ++k) {
                        const double x = out.knots[k];
                        std::size_t hint = 0;
                        auto integrand = [&](double y) { return cont(x + y, hint); };
                        out.values[k] +=
                            weight * detail::gl_expectation(integrand, pdf, lo, hi, -x);
                    }
                } else {
                    const double span = -d.mean * std::log(1e-6);
                    const bool up = d.direction == JumpDirection::up;
                    const double lo = up ? 0.0 : -span;
                    const double hi = up ? span : 0.0;
                    auto pdf = [&](double y) {
                        const double t = up ? y : -y;
                        return std::exp(-t / d.mean) / d.mean;
                    };
                    for (std::size_t k = 0; k < out.knots.size(); ++k) {
                        const double x = out.knots[k];
                        std::size_t hint = 0;
                        auto integrand = [&](double y) { return cont(x + y, hint); };
                        out.values[k] +=
                            weight * detail::gl_expectation(integrand, pdf, lo, hi, -x);
                    }
                }
            },
            model.switch_jump[state][j]);

        tail += weight * f.tail_slope[j];
    }
    out.tail_slope = std::clamp(tail, 0.0, model.beta);
    return out;
}

struct ClassDViolation : std::runtime_error {
    explicit ClassDViolation(const std::string& what)
        : std::runtime_error("CLASS_D_VIOLATION: " + what) {}
};

/// Concavity/slope diagnostics of a hat-transformed slice (the conditions
/// of the admissible class).
struct ClassDReport {
    double slope_at_zero = 0.0;
    double tail_slope = 0.0;
    double max_concavity_violation = 0.0;
};

inline ClassDReport check_class_d(const PiecewiseLinear& hat, double beta, double tol,
                                  bool throw_on_violation) {
    ClassDReport rep;
    rep.tail_slope = hat.tail_slope;
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < hat.knots.size(); ++k) {
        const double s = (hat.values[k + 1] - hat.values[k]) / (hat.knots[k + 1] - hat.knots[k]);
        if (k == 0) rep.slope_at_zero = s;
        rep.max_concavity_violation = std::max(rep.max_concavity_violation, s - prev);
        prev = s;
    }
    rep.max_concavity_violation =
        std::max(rep.max_concavity_violation, hat.tail_slope - prev);
    if (throw_on_violation) {
        if (rep.slope_at_zero > beta + tol)
            throw ClassDViolation("hat slope at 0 exceeds beta: " +
                                  std::to_string(rep.slope_at_zero));
        if (rep.tail_slope < -tol || rep.tail_slope > 1.0 + tol)
            throw ClassDViolation("hat tail slope outside [0,1]: " +
                                  std::to_string(rep.tail_slope));
        if (rep.max_concavity_violation > tol)
            throw ClassDViolation("hat transform concavity violation " +
                                  std::to_string(rep.max_concavity_violation));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// T_b and Gamma operators
// ---------------------------------------------------------------------------

struct MapSolverOptions {
    double tol_b = 1e-3;
    double b_max = 1e3;
    double class_d_tol = 0.05;
    EstimatorOptions estimator;
};

struct TApplyResult {
    ValueGrid grid;
    double max_se = 0.0;        ///< largest per-knot standard error
    bool grid_too_small = false;  ///< some barrier exceeded the knot span
};

/**
 * One application of T_b: for every state i, the single-regime NPV under the
 * barrier b(i) with discount alpha(i) and running payoff q_i * hat f(., i),
 * evaluated by CRN Monte Carlo at every knot at or below the barrier and
 * extended affinely above it (exact pathwise identity). The result is
 * projected back onto the concave class.
 */
inline TApplyResult apply_T(const std::vector<double>& b_vec, const ValueGrid& f,
                            const MapModel& model, const std::vector<PathBatch>& batches,
                            const MapSolverOptions& opts = {}) {
    const std::size_t n_states = model.n_states();
    TApplyResult out;
    out.grid.knots = f.knots;
    out.grid.values.assign(n_states, std::vector<double>(f.knots.size(), 0.0));
    out.grid.tail_slope.assign(n_states, 1.0);

    for (std::size_t i = 0; i < n_states; ++i) {
        const double b = b_vec[i];
        const double qi = model.switch_rate(i);
        const double alpha = model.alpha(i);
        const PiecewiseLinear hat = hat_transform(f, model, i);
        const PiecewiseLinearPayoff payoff{&hat};
        const DiscountTable disc(alpha, batches[i].dt, batches[i].n_steps);

        if (b > f.knots.back()) out.grid_too_small = true;
        const ValueEstimate at_b = detail::estimate_value_impl(
            model.models[i], alpha, model.beta, qi, b, b, batches[i], payoff, disc,
            opts.estimator);
        out.max_se = std::max(out.max_se, at_b.half_width / 1.96);
        for (std::size_t k = 0; k < f.knots.size(); ++k) {
            const double x = f.knots[k];
            if (x > b) {
                out.grid.values[i][k] = at_b.value + (x - b);
            } else {
                const ValueEstimate est = detail::estimate_value_impl(
                    model.models[i], alpha, model.beta, qi, b, x, batches[i], payoff, disc,
                    opts.estimator);
                out.grid.values[i][k] = est.value;
                out.max_se = std::max(out.max_se, est.half_width / 1.96);
            }
        }
        out.grid.project_concave(i, model.beta);
    }
    return out;
}

struct GammaResult {
    ValueGrid grid;
    std::vector<double> b_vec;
    std::vector<BarrierSolution> solutions;
    double max_se = 0.0;
    bool grid_too_small = false;
};

/**
 * One application of Gamma: per state, solve the single-regime problem with
 * terminal payoff hat f(., i) for its optimal barrier, then apply T at the
 * resulting barrier vector. Warm brackets reuse the previous barriers.
 */
inline GammaResult apply_Gamma(const ValueGrid& f, const MapModel& model,
                               const std::vector<PathBatch>& batches,
                               const MapSolverOptions& opts = {},
                               const std::vector<double>* warm_barriers = nullptr) {
    const std::size_t n_states = model.n_states();
    GammaResult out;
    out.b_vec.resize(n_states);
    out.solutions.resize(n_states);
    for (std::size_t i = 0; i < n_states; ++i) {
        const PiecewiseLinear hat = hat_transform(f, model, i);
        check_class_d(hat, model.beta, opts.class_d_tol, true);
        const PiecewiseLinearPayoff payoff{&hat};
        SolverOptions sopts;
        sopts.tol_b = opts.tol_b;
        sopts.b_max = opts.b_max;
        sopts.estimator = opts.estimator;
        std::optional<Bracket> warm;
        if (warm_barriers && (*warm_barriers)[i] > 0.0) {
            const double wb = (*warm_barriers)[i];
            warm = Bracket{0.5 * wb, 2.0 * wb};
        }
        out.solutions[i] =
            detail::solve_bstar_impl(model.models[i], model.alpha(i), model.beta,
                                     model.switch_rate(i), payoff, batches[i], sopts, warm);
        if (out.solutions[i].status != SolveStatus::ok)
            throw std::runtime_error("NO_UPPER_BRACKET: state " + std::to_string(i) +
                                     " has g_hat >= 1 up to b_max");
        out.b_vec[i] = out.solutions[i].b_star;
    }
    TApplyResult applied = apply_T(out.b_vec, f, model, batches, opts);
    out.grid = std::move(applied.grid);
    out.max_se = applied.max_se;
    out.grid_too_small = applied.grid_too_small;
    return out;
}

// ---------------------------------------------------------------------------
// Fixed-point iteration
// ---------------------------------------------------------------------------

struct IterationTrace {
    struct Row {
        std::size_t n = 0;
        std::vector<double> b_vec;
        double sup_step = 0.0;       ///< ||f_n - f_{n-1}||_inf on the grid
        double barrier_move = 0.0;   ///< max_i |b_n(i) - b_{n-1}(i)|
    };
    std::vector<Row> rows;
    double contraction_k = 0.0;
};

enum class IterateStatus { ok, max_iter_exceeded };

struct IterateResult {
    ValueGrid value;
    std::vector<double> b_star;
    IterationTrace trace;
    IterateStatus status = IterateStatus::ok;
    double max_se = 0.0;
    bool grid_too_small = false;  ///< a barrier ran past the knot span
    std::vector<BarrierSolution> final_solutions;
};

/**
 * Fixed-point iteration f_{n+1} = Gamma f_n on one set of per-state batches
 * (common random numbers across iterations). Stops when the barrier movement
 * and the grid sup-step both fall below tol (the latter scaled by 1 + ||f||).
 */
inline IterateResult fixed_point_iterate(const MapModel& model, const ValueGrid& f0,
                                         double tol, std::size_t max_iter,
                                         const std::vector<PathBatch>& batches,
                                         const MapSolverOptions& opts = {},
                                         std::vector<double> b0 = {}) {
    IterateResult out;
    out.trace.contraction_k = contraction_constant(model);
    ValueGrid f = f0;
    std::vector<double> prev_b = b0;
    if (prev_b.empty()) prev_b.assign(model.n_states(), 0.0);
    out.trace.rows.push_back({0, prev_b, 0.0, 0.0});

    for (std::size_t n = 1; n <= max_iter; ++n) {
        const std::vector<double>* warm = (n == 1 && b0.empty()) ? nullptr : &prev_b;
        GammaResult gamma = apply_Gamma(f, model, batches, opts, warm);
        const double sup_step = gamma.grid.sup_diff(f);
        double move = 0.0;
        for (std::size_t i = 0; i < model.n_states(); ++i)
            move = std::max(move, std::abs(gamma.b_vec[i] - prev_b[i]));
        out.trace.rows.push_back({n, gamma.b_vec, sup_step, move});
        out.max_se = std::max(out.max_se, gamma.max_se);
        out.grid_too_small = out.grid_too_small || gamma.grid_too_small;
        f = std::move(gamma.grid);
        prev_b = gamma.b_vec;
        out.final_solutions = std::move(gamma.solutions);
        if (move <= tol && sup_step <= tol * (1.0 + f.b_norm())) {
            out.value = std::move(f);
            out.b_star = prev_b;
            return out;
        }
    }
    out.value = std::move(f);
    out.b_star = prev_b;
    out.status = IterateStatus::max_iter_exceeded;  // MAX_ITER_EXCEEDED, trace attached
    return out;
}

// ---------------------------------------------------------------------------
// Joint MAP simulation and direct strategy evaluation
// ---------------------------------------------------------------------------

/// Joint (X, H) skeletons: per-step aggregated increments (switch jumps
/// folded into the step where the switch takes effect) plus the regime at
/// every grid point.
struct MapBatch {
    std::uint64_t master_seed = 0;
    std::size_t initial_state = 0;
    std::size_t n_paths = 0;
    double dt = 0.0;
    double horizon = 0.0;
    std::size_t n_steps = 0;
    std::vector<double> increments;    ///< [path * n_steps + k]
    std::vector<std::uint16_t> states;  ///< [path * (n_steps+1) + k], state at t_k

    std::span<const double> path(std::size_t i) const {
        return {increments.data() + i * n_steps, n_steps};
    }
    std::span<const std::uint16_t> path_states(std::size_t i) const {
        return {states.data() + i * (n_steps + 1), n_steps + 1};
    }
};

/**
 * Embedded-chain simulation: exponential holding times, per-state Euler
 * increments keyed exactly like simulate_batch (a single-state chain
 * reproduces it bitwise), switch jumps drawn from F_ij on a separate chain
 * stream. Regimes are piecewise constant per step (left endpoint); switches
 * inside a step take effect at the step's right endpoint.
 */
inline MapBatch simulate_map(const MapModel& model, double dt, double horizon,
                             std::size_t n_paths, std::uint64_t master_seed,
                             std::size_t initial_state, const BatchLimits& limits = {},
                             int n_threads = 0) {
    MapBatch batch;
    batch.master_seed = master_seed;
    batch.initial_state = initial_state;
    batch.n_paths = n_paths;
    batch.dt = dt;
    batch.horizon = horizon;
    batch.n_steps = steps_for_horizon(dt, horizon);
    const std::size_t bytes =
        n_paths * (batch.n_steps * sizeof(double) + (batch.n_steps + 1) * sizeof(std::uint16_t));
    if (bytes > limits.byte_budget)
        throw BatchTooLarge("MAP skeleton needs " + std::to_string(bytes) + " bytes");
    batch.increments.resize(n_paths * batch.n_steps);
    batch.states.resize(n_paths * (batch.n_steps + 1));

    const double sqrt_dt = std::sqrt(dt);
    const std::size_t n_steps = batch.n_steps;
    const std::size_t n_states = model.n_states();
    parallel_for(n_paths, n_threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            double* inc = batch.increments.data() + p * n_steps;
            std::uint16_t* st = batch.states.data() + p * (n_steps + 1);
            StepRng chain(master_seed, p, StepRng::kTagChain);
            std::size_t state = initial_state;
            double qi = model.switch_rate(state);
            double next_switch = qi > 0.0 ? chain.exponential(1.0 / qi)
                                          : std::numeric_limits<double>::infinity();
            st[0] = static_cast<std::uint16_t>(state);
            for (std::size_t k = 0; k < n_steps; ++k) {
                StepRng rng(master_seed, p, k);
                double dx = step_increment(model.models[state], dt, sqrt_dt, rng);
                const double t_right = static_cast<double>(k + 1) * dt;
                while (next_switch <= t_right) {
                    // draw the destination from the embedded chain
                    double u = chain.uniform() * qi;
                    std::size_t dest = state;
                    for (std::size_t j = 0; j < n_states; ++j) {
                        if (j == state) continue;
                        u -= model.q[state][j];
                        if (u <= 0.0) {
                            dest = j;
                            break;
                        }
                    }
                    dx += sample_switch_jump(model.switch_jump[state][dest], chain);
                    state = dest;
                    qi = model.switch_rate(state);
                    next_switch = qi > 0.0
                                      ? next_switch + chain.exponential(1.0 / qi)
                                      : std::numeric_limits<double>::infinity();
                }
                inc[k] = dx;
                st[k + 1] = static_cast<std::uint16_t>(state);
            }
        }
    });
    return batch;
}

/**
 * NPV of the Markov-modulated double-barrier strategy along a MAP batch:
 * reflect at [0, b(H(t_k))] per grid point, discount by the accumulated
 * state-dependent rate. This is the direct evaluator behind the barrier
 * sweep and the bound initializers.
 */
inline ValueEstimate estimate_map_value(const MapModel& model,
                                        const std::vector<double>& b_vec, double x,
                                        const MapBatch& batch,
                                        const EstimatorOptions& opts = {}) {
    const std::size_t n_steps = batch.n_steps;
    std::vector<double> value(batch.n_paths);
    std::vector<double> div(batch.n_paths), inj(batch.n_paths);
    std::vector<double> step_factor(model.n_states());
    for (std::size_t i = 0; i < model.n_states(); ++i)
        step_factor[i] = std::exp(-model.q_disc[i] * batch.dt);
    const double beta = model.beta;

    parallel_for(batch.n_paths, opts.n_threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            const double* inc = batch.increments.data() + p * n_steps;
            const std::uint16_t* st = batch.states.data() + p * (n_steps + 1);
            double b = b_vec[st[0]];
            double s = x;
            double l = x > b ? x - b : 0.0;
            double r = x < 0.0 ? -x : 0.0;
            double disc_l = l;
            double disc_r = r;
            double discount = 1.0;  // e^{-Lambda(t_k)}
            for (std::size_t k = 1; k <= n_steps; ++k) {
                discount *= step_factor[st[k - 1]];
                s += inc[k - 1];
                b = b_vec[st[k]];
                double u = (s - l) + r;
                if (u > b) {
                    const double dl = u - b;
                    l += dl;
                    u = (s - l) + r;
                    disc_l += discount * dl;
                }
                if (u < 0.0) {
                    const double dr = -u;
                    r += dr;
                    disc_r += discount * dr;
                }
            }
            div[p] = disc_l;
            inj[p] = disc_r;
            value[p] = disc_l - beta * disc_r;
        }
    });
    const MeanCi ci = mean_ci(value);
    ValueEstimate out;
    out.value = ci.mean;
    out.half_width = ci.half_width;
    out.dividends = tree_sum(div) / static_cast<double>(batch.n_paths);
    out.injections = tree_sum(inj) / static_cast<double>(batch.n_paths);
    out.n_paths = batch.n_paths;
    double min_q = model.q_disc[0];
    for (double qd : model.q_disc) min_q = std::min(min_q, qd);
    out.horizon_warning = std::exp(-min_q * batch.horizon) > opts.censor_weight_tol;
    return out;
}

/// Discounted running-max integral of the uncontrolled MAP started at 0:
/// the upper-bound functional of the value (Appendix-A.4 style).
inline MeanCi discounted_running_max(const MapModel& model, const MapBatch& batch,
                                     const EstimatorOptions& opts = {}) {
    const std::size_t n_steps = batch.n_steps;
    std::vector<double> contrib(batch.n_paths);
    std::vector<double> step_factor(model.n_states());
    for (std::size_t i = 0; i < model.n_states(); ++i)
        step_factor[i] = std::exp(-model.q_disc[i] * batch.dt);
    parallel_for(batch.n_paths, opts.n_threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            const double* inc = batch.increments.data() + p * n_steps;
            const std::uint16_t* st = batch.states.data() + p * (n_steps + 1);
            double s = 0.0;
            double running_max = 0.0;
            double discount = 1.0;
            double acc = 0.0;
            for (std::size_t k = 1; k <= n_steps; ++k) {
                discount *= step_factor[st[k - 1]];
                s += inc[k - 1];
                if (s > running_max) {
                    acc += discount * (s - running_max);
                    running_max = s;
                }
            }
            contrib[p] = acc;
        }
    });
    return mean_ci(contrib);
}

// ---------------------------------------------------------------------------
// Bound initializers (sandwich start for the iteration)
// ---------------------------------------------------------------------------

struct BoundsResult {
    ValueGrid v_minus;
    ValueGrid v_plus;
    std::vector<double> fixed_barriers;  ///< barrier vector behind v_minus
};

/**
 * V_-(x,i) = x + NPV of a feasible strategy from (0,i): pay any surplus as an
 * immediate dividend, then run the Markov-modulated barrier strategy at the
 * state-wise single-regime barriers solved with the affine class-D seed.
 * V_+(x,i) = x + discounted running-max integral of the uncontrolled MAP.
 */
inline BoundsResult bounds_init(const MapModel& model, const std::vector<PathBatch>& batches,
                                const std::vector<MapBatch>& map_batches,
                                const std::vector<double>& knots,
                                const MapSolverOptions& opts = {}) {
    const std::size_t n_states = model.n_states();
    BoundsResult out;
    const ValueGrid f0 = affine_grid(n_states, knots);

    out.fixed_barriers.resize(n_states);
    for (std::size_t i = 0; i < n_states; ++i) {
        const PiecewiseLinear hat = hat_transform(f0, model, i);
        const PiecewiseLinearPayoff payoff{&hat};
        SolverOptions sopts;
        sopts.tol_b = opts.tol_b;
        sopts.b_max = opts.b_max;
        sopts.estimator = opts.estimator;
        const BarrierSolution sol =
            detail::solve_bstar_impl(model.models[i], model.alpha(i), model.beta,
                                     model.switch_rate(i), payoff, batches[i], sopts);
        out.fixed_barriers[i] = sol.b_star;
    }

    out.v_minus = affine_grid(n_states, knots);
    out.v_plus = affine_grid(n_states, knots);
    for (std::size_t i = 0; i < n_states; ++i) {
        const ValueEstimate lower =
            estimate_map_value(model, out.fixed_barriers, 0.0, map_batches[i], opts.estimator);
        const MeanCi upper = discounted_running_max(model, map_batches[i], opts.estimator);
        for (std::size_t k = 0; k < knots.size(); ++k) {
            out.v_minus.values[i][k] += lower.value;
            out.v_plus.values[i][k] += upper.mean;
        }
    }
    return out;
}

} // namespace bailout
