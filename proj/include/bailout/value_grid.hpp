#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace bailout {

/**
 * Continuous piecewise-linear function on [0, inf): knots on [0, x_n], then a
 * linear tail. Evaluation takes a cursor hint so sweeps with slowly moving
 * arguments cost O(1) per call.
 */
struct PiecewiseLinear {
    std::vector<double> knots;   ///< ascending, knots.front() == 0
    std::vector<double> values;
    double tail_slope = 0.0;     ///< slope for x > knots.back()

    double eval(double x, std::size_t& hint) const {
        const std::size_t n = knots.size();
        if (x >= knots[n - 1]) return values[n - 1] + tail_slope * (x - knots[n - 1]);
        if (x <= knots[0]) {
            const double s0 = (values[1] - values[0]) / (knots[1] - knots[0]);
            return values[0] + s0 * (x - knots[0]);
        }
        std::size_t i = std::min(hint, n - 2);
        while (x < knots[i]) --i;
        while (x >= knots[i + 1]) ++i;
        hint = i;
        const double t = (x - knots[i]) / (knots[i + 1] - knots[i]);
        return values[i] + t * (values[i + 1] - values[i]);
    }

    /// Right derivative; piecewise constant, equal to tail_slope from the
    /// last knot onward.
    double slope_plus(double x, std::size_t& hint) const {
        const std::size_t n = knots.size();
        if (x >= knots[n - 1]) return tail_slope;
        if (x < knots[0]) x = knots[0];
        std::size_t i = std::min(hint, n - 2);
        while (x < knots[i]) --i;
        while (i + 2 < n && x >= knots[i + 1]) ++i;
        hint = i;
        return (values[i + 1] - values[i]) / (knots[i + 1] - knots[i]);
    }

    double eval(double x) const {
        std::size_t hint = 0;
        return eval(x, hint);
    }
};

/// Payoff adapter so PiecewiseLinear plugs into the MC kernels directly.
struct PiecewiseLinearPayoff {
    const PiecewiseLinear* f;
    double w(double x, std::size_t& hint) const { return f->eval(x, hint); }
    double wp(double x, std::size_t& hint) const { return f->slope_plus(x, hint); }
};

/// Knot abscissae with geometric refinement near 0: spacing grows by
/// `growth` per interval, covering [0, x_max] with n_knots points.
inline std::vector<double> make_knot_grid(std::size_t n_knots, double x_max,
                                          double growth = 1.04) {
    if (n_knots < 3) throw std::invalid_argument("need at least 3 knots");
    if (!(growth > 0.0) || !(x_max > 0.0))
        throw std::invalid_argument("knot grid needs growth > 0 and x_max > 0");
    std::vector<double> knots(n_knots);
    const std::size_t cells = n_knots - 1;
    double total = 0.0;
    double step = 1.0;
    for (std::size_t i = 0; i < cells; ++i, step *= growth) total += step;
    const double h0 = x_max / total;
    knots[0] = 0.0;
    step = h0;
    for (std::size_t i = 1; i < n_knots; ++i, step *= growth)
        knots[i] = knots[i - 1] + step;
    knots[n_knots - 1] = x_max;
    return knots;
}

/// Weighted pool-adjacent-violators projection onto non-increasing sequences
/// (least squares, weights w). Returns the projected sequence.
inline std::vector<double> pav_nonincreasing(std::vector<double> s,
                                             const std::vector<double>& w) {
    struct Block {
        double mean;
        double weight;
        std::size_t count;
    };
    std::vector<Block> blocks;
    blocks.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        Block b{s[i], w[i], 1};
        while (!blocks.empty() && blocks.back().mean < b.mean) {
            const Block& prev = blocks.back();
            const double tot = prev.weight + b.weight;
            b = {(prev.mean * prev.weight + b.mean * b.weight) / tot, tot,
                 prev.count + b.count};
            blocks.pop_back();
        }
        blocks.push_back(b);
    }
    std::vector<double> out;
    out.reserve(s.size());
    for (const Block& b : blocks)
        for (std::size_t i = 0; i < b.count; ++i) out.push_back(b.mean);
    return out;
}

/**
 * Per-state piecewise-linear concave value function with a linear tail; the
 * object the T_b and Gamma operators act on. The linear tail represents the
 * linear-growth norm of the function space exactly.
 */
struct ValueGrid {
    std::vector<double> knots;                 ///< shared across states
    std::vector<std::vector<double>> values;   ///< [state][knot]
    std::vector<double> tail_slope;            ///< [state], in [0, beta]

    std::size_t n_states() const { return values.size(); }

    PiecewiseLinear slice(std::size_t state) const {
        return {knots, values[state], tail_slope[state]};
    }

    double eval(std::size_t state, double x) const {
        std::size_t hint = 0;
        return PiecewiseLinear{knots, values[state], tail_slope[state]}.eval(x, hint);
    }

    /// max_i sup_x |f(x,i)| / (1 + x); finite by the linear tail.
    double b_norm() const {
        double out = 0.0;
        for (std::size_t i = 0; i < n_states(); ++i) {
            for (std::size_t k = 0; k < knots.size(); ++k)
                out = std::max(out, std::abs(values[i][k]) / (1.0 + knots[k]));
            out = std::max(out, std::abs(tail_slope[i]));
        }
        return out;
    }

    /// Sup-norm distance on the knot grid (tails are compared via slope).
    double sup_diff(const ValueGrid& other) const {
        double out = 0.0;
        for (std::size_t i = 0; i < n_states(); ++i)
            for (std::size_t k = 0; k < knots.size(); ++k)
                out = std::max(out, std::abs(values[i][k] - other.values[i][k]));
        return out;
    }

    /// Largest upward slope jump (concavity violation) over all states.
    double max_concavity_violation() const {
        double out = 0.0;
        for (std::size_t i = 0; i < n_states(); ++i) {
            double prev = std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
                const double s = (values[i][k + 1] - values[i][k]) / (knots[k + 1] - knots[k]);
                out = std::max(out, s - prev);
                prev = s;
            }
            out = std::max(out, tail_slope[i] - prev);
        }
        return out;
    }

    /**
     * Project state i onto the concave cone with slopes in [0, slope_cap]:
     * weighted PAV on the knot slopes (tail slope participates as a final
     * element), anchored at the value in x = 0.
     */
    void project_concave(std::size_t state, double slope_cap) {
        auto& v = values[state];
        const std::size_t cells = knots.size() - 1;
        std::vector<double> s(cells + 1), w(cells + 1);
        for (std::size_t k = 0; k < cells; ++k) {
            w[k] = knots[k + 1] - knots[k];
            s[k] = (v[k + 1] - v[k]) / w[k];
        }
        s[cells] = tail_slope[state];
        w[cells] = w[cells - 1];
        const std::vector<double> proj = pav_nonincreasing(std::move(s), w);
        for (std::size_t k = 0; k < cells; ++k) {
            const double slope = std::clamp(proj[k], 0.0, slope_cap);
            v[k + 1] = v[k] + slope * w[k];
        }
        tail_slope[state] = std::clamp(proj[cells], 0.0, slope_cap);
    }
};

/// Grid with f(x, i) = x for every state: concave, slope 1, class-D.
inline ValueGrid affine_grid(std::size_t n_states, std::vector<double> knots) {
    ValueGrid g;
    g.knots = std::move(knots);
    g.values.assign(n_states, g.knots);
    g.tail_slope.assign(n_states, 1.0);
    return g;
}

} // namespace bailout
