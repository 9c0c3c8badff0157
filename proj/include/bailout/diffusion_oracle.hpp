#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "bailout/levy_model.hpp"

namespace bailout {

/// Brownian motion with drift under exponential killing; the only case the
/// oracle covers. General jump models are validated by Monte Carlo instead.
struct DiffusionSpec {
    double mu = 0.0;
    double sigma = 1.0;   ///< > 0
    double alpha = 1.0;   ///< killing/discount rate, > 0
};

struct QuadratureFailure : std::runtime_error {
    explicit QuadratureFailure(const std::string& what)
        : std::runtime_error("QUADRATURE_FAILURE: " + what) {}
};

struct SingularBvp : std::runtime_error {
    explicit SingularBvp(double cond)
        : std::runtime_error("SINGULAR_BVP: condition estimate " + std::to_string(cond)) {}
};

struct NoRoot : std::runtime_error {
    explicit NoRoot(const std::string& what) : std::runtime_error("NO_ROOT: " + what) {}
};

namespace detail {

/// Positive roots (theta_plus, theta_minus) of sigma^2 th^2/2 + mu th - alpha = 0,
/// both taken with positive sign, plus the discriminant root D = sigma^2(th+ + th-)/2.
struct DiffusionRoots {
    double theta_plus;
    double theta_minus;
    double disc;  // sqrt(mu^2 + 2 alpha sigma^2)
};

inline DiffusionRoots diffusion_roots(const DiffusionSpec& spec) {
    if (!(spec.sigma > 0.0) || !(spec.alpha > 0.0))
        throw std::invalid_argument("diffusion oracle needs sigma > 0 and alpha > 0");
    const double s2 = spec.sigma * spec.sigma;
    const double disc = std::sqrt(spec.mu * spec.mu + 2.0 * spec.alpha * s2);
    return {(-spec.mu + disc) / s2, (spec.mu + disc) / s2, disc};
}

/// Adaptive Simpson with absolute tolerance; throws on non-convergence.
/// Subintervals narrower than min_width are accepted as-is: a bounded jump
/// discontinuity contributes at most max|f| * min_width there, which keeps
/// step integrands (capped payoffs) convergent.
template <class Fn>
double simpson_rec(const Fn& f, double a, double b, double fa, double fm, double fb,
                   double whole, double tol, int depth, double min_width) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (std::abs(delta) <= 15.0 * tol || b - a <= min_width) return left + right + delta / 15.0;
    if (depth <= 0) throw QuadratureFailure("adaptive Simpson did not reach tolerance");
    return simpson_rec(f, a, m, fa, flm, fm, left, tol * 0.5, depth - 1, min_width) +
           simpson_rec(f, m, b, fm, frm, fb, right, tol * 0.5, depth - 1, min_width);
}

template <class Fn>
double integrate(const Fn& f, double a, double b, double tol = 1e-8, int max_depth = 48) {
    if (b <= a) return 0.0;
    const double fa = f(a);
    const double fb = f(b);
    const double m = 0.5 * (a + b);
    const double fm = f(m);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth, 1e-12 * (b - a));
}

} // namespace detail

struct ScaleValues {
    double w;        ///< W^(alpha)(x)
    double w_prime;  ///< d/dx W^(alpha)(x)
    double z;        ///< Z^(alpha)(x) = 1 + alpha * int_0^x W
};

/// Closed-form alpha-scale functions of the drifted Brownian motion.
inline ScaleValues scale_functions(const DiffusionSpec& spec, double x) {
    const auto roots = detail::diffusion_roots(spec);
    const double up = std::exp(roots.theta_plus * x);
    const double dn = std::exp(-roots.theta_minus * x);
    ScaleValues out;
    out.w = (up - dn) / roots.disc;
    out.w_prime = (roots.theta_plus * up + roots.theta_minus * dn) / roots.disc;
    // alpha * int_0^x W, using theta+ * theta- = 2 alpha / sigma^2
    out.z = 1.0 + spec.alpha *
                      ((up - 1.0) / roots.theta_plus - (1.0 - dn) / roots.theta_minus) /
                      roots.disc;
    return out;
}

/// E_b[e^{-alpha kappa}] for the process reflected at b and started at b,
/// kappa the first passage below 0. Overflow-safe for large b.
inline double reflected_passage_transform(const DiffusionSpec& spec, double b) {
    const auto roots = detail::diffusion_roots(spec);
    const double decay = std::exp(-(roots.theta_plus + roots.theta_minus) * b);
    return (roots.theta_plus + roots.theta_minus) * std::exp(-roots.theta_minus * b) /
           (roots.theta_plus + roots.theta_minus * decay);
}

/// Resolvent density of the reflected process before kappa, started at b:
/// the exact kernel W(b) W'(b-y)/W'(b) - W(b-y), in an overflow-safe form.
inline double reflected_resolvent_density(const DiffusionSpec& spec, double b, double y) {
    const auto roots = detail::diffusion_roots(spec);
    const double tp = roots.theta_plus;
    const double tm = roots.theta_minus;
    const double decay = std::exp(-(tp + tm) * b);
    return (tp + tm) * (std::exp(-tm * (b - y)) - std::exp(-tp * y - tm * b)) /
           (roots.disc * (tp + tm * decay));
}

/// The barrier-selection function g(b) by closed form + adaptive quadrature,
/// through the reflected exit identities; both pieces carry their own
/// residual tests.
inline double oracle_g(const DiffusionSpec& spec, double b, double beta, double r,
                       const std::function<double(double)>& w_prime_plus,
                       double quad_tol = 1e-8) {
    const double passage = beta * reflected_passage_transform(spec, b);
    if (b <= 0.0) return passage;
    const double integral = detail::integrate(
        [&](double y) { return w_prime_plus(y) * reflected_resolvent_density(spec, b, y); },
        0.0, b, quad_tol);
    return passage + r * integral;
}

enum class UpperBc {
    neumann,     ///< v'(b) = 1 (reflecting dividend barrier)
    smooth_fit,  ///< alpha v(b) - mu v'(b) = r w(b), v'(b) left free
};

struct HjbSolution {
    std::vector<double> x;
    std::vector<double> v;
    double slope0 = 0.0;         ///< one-sided FD slope at 0
    double slope_b = 0.0;        ///< one-sided FD slope at b
    double residual_norm = 0.0;  ///< max |(L-alpha)v + r w| on the interior grid
    double cond_estimate = 0.0;  ///< max/min pivot ratio of the tridiagonal solve

    double at(double xq) const {
        if (xq <= x.front()) return v.front();
        if (xq >= x.back()) return v.back();
        const auto it = std::upper_bound(x.begin(), x.end(), xq);
        const std::size_t i = static_cast<std::size_t>(it - x.begin());
        const double t = (xq - x[i - 1]) / (x[i] - x[i - 1]);
        return v[i - 1] + t * (v[i] - v[i - 1]);
    }
};

/**
 * Solve (sigma^2/2) v'' + mu v' - alpha v + r w = 0 on (0, b) with v'(0) = beta
 * and the chosen upper condition, by second-order finite differences
 * (ghost-node Neumann, Thomas solve). Grid spacing is at most 1e-3 * b.
 */
inline HjbSolution solve_hjb_ode(const DiffusionSpec& spec, double beta, double r,
                                 const std::function<double(double)>& w, double b,
                                 UpperBc upper = UpperBc::neumann,
                                 std::size_t min_cells = 1000) {
    if (!(b > 0.0)) throw std::invalid_argument("solve_hjb_ode needs b > 0");
    const std::size_t n = std::max<std::size_t>(min_cells, 1000);  // cells; h <= 1e-3 b
    const double h = b / static_cast<double>(n);
    const double s2 = spec.sigma * spec.sigma;
    const double inv_h2 = 1.0 / (h * h);

    std::vector<double> lower(n + 1), diag(n + 1), upper_band(n + 1), rhs(n + 1);
    std::vector<double> wx(n + 1);
    for (std::size_t i = 0; i <= n; ++i) wx[i] = w(static_cast<double>(i) * h);

    // i = 0, ghost node for v'(0) = beta
    diag[0] = -s2 * inv_h2 - spec.alpha;
    upper_band[0] = s2 * inv_h2;
    rhs[0] = -r * wx[0] + s2 * beta / h - spec.mu * beta;
    for (std::size_t i = 1; i < n; ++i) {
        lower[i] = 0.5 * s2 * inv_h2 - 0.5 * spec.mu / h;
        diag[i] = -s2 * inv_h2 - spec.alpha;
        upper_band[i] = 0.5 * s2 * inv_h2 + 0.5 * spec.mu / h;
        rhs[i] = -r * wx[i];
    }
    double extra = 0.0;  // coefficient of v[n-2] in the last row (smooth-fit case)
    if (upper == UpperBc::neumann) {
        lower[n] = s2 * inv_h2;
        diag[n] = -s2 * inv_h2 - spec.alpha;
        rhs[n] = -r * wx[n] - s2 / h - spec.mu;
    } else {
        // alpha v_n - mu (3 v_n - 4 v_{n-1} + v_{n-2}) / (2h) = r w_n
        const double c = spec.mu / (2.0 * h);
        extra = -c;
        lower[n] = 4.0 * c;
        diag[n] = spec.alpha - 3.0 * c;
        rhs[n] = r * wx[n];
    }

    // Fold the v[n-2] entry of the last row into tridiagonal form.
    if (extra != 0.0) {
        const double factor = extra / lower[n - 1];
        lower[n] -= factor * diag[n - 1];
        diag[n] -= factor * upper_band[n - 1];
        rhs[n] -= factor * rhs[n - 1];
    }

    // Thomas elimination; singularity is judged per row (pivot against the
    // row's own infinity norm) so differently scaled boundary rows don't
    // trip the detector.
    double min_rel_pivot = 1.0;
    {
        const double row0 = std::max(std::abs(diag[0]), std::abs(upper_band[0]));
        min_rel_pivot = std::abs(diag[0]) / std::max(row0, 1e-300);
    }
    for (std::size_t i = 1; i <= n; ++i) {
        const double row_norm = std::max({std::abs(lower[i]), std::abs(diag[i]),
                                          std::abs(upper_band[i])});
        const double m = lower[i] / diag[i - 1];
        diag[i] -= m * upper_band[i - 1];
        rhs[i] -= m * rhs[i - 1];
        min_rel_pivot =
            std::min(min_rel_pivot, std::abs(diag[i]) / std::max(row_norm, 1e-300));
    }
    const double cond = 1.0 / std::max(min_rel_pivot, 1e-300);
    if (min_rel_pivot < 1e-12) throw SingularBvp(cond);

    HjbSolution sol;
    sol.cond_estimate = cond;
    sol.x.resize(n + 1);
    sol.v.resize(n + 1);
    sol.v[n] = rhs[n] / diag[n];
    for (std::size_t i = n; i-- > 0;)
        sol.v[i] = (rhs[i] - upper_band[i] * sol.v[i + 1]) / diag[i];
    for (std::size_t i = 0; i <= n; ++i) sol.x[i] = static_cast<double>(i) * h;

    sol.slope0 = (-3.0 * sol.v[0] + 4.0 * sol.v[1] - sol.v[2]) / (2.0 * h);
    sol.slope_b = (3.0 * sol.v[n] - 4.0 * sol.v[n - 1] + sol.v[n - 2]) / (2.0 * h);
    for (std::size_t i = 1; i < n; ++i) {
        const double res = 0.5 * s2 * (sol.v[i - 1] - 2.0 * sol.v[i] + sol.v[i + 1]) * inv_h2 +
                           0.5 * spec.mu * (sol.v[i + 1] - sol.v[i - 1]) / h -
                           spec.alpha * sol.v[i] + r * wx[i];
        sol.residual_norm = std::max(sol.residual_norm, std::abs(res));
    }
    return sol;
}

/// b* as the root of oracle_g(b) = 1, found by bisection to `tol`.
inline double oracle_bstar(const DiffusionSpec& spec, double beta, double r,
                           const std::function<double(double)>& w_prime_plus,
                           double tol = 1e-8, double b_max = 1e3) {
    auto g = [&](double b) { return oracle_g(spec, b, beta, r, w_prime_plus); };
    if (g(0.0) < 1.0) return 0.0;  // cannot occur for the diffusion (g(0)=beta>1)
    double lo = 0.0;
    double hi = 1.0;
    while (g(hi) >= 1.0) {
        lo = hi;
        hi *= 2.0;
        if (hi > b_max) throw NoRoot("oracle_g stays >= 1 up to b_max");
    }
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) < 1.0 ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

/**
 * Independent b* via the C2-fit characterization: solve the HJB family with
 * the smooth-fit upper condition (v''(b) = 0 folded through the ODE, slope at
 * b left free) and find the b whose free slope equals 1. Richardson
 * extrapolation over the FD grid pushes the boundary-slope error to O(h^4).
 */
inline double oracle_bstar_smooth_fit(const DiffusionSpec& spec, double beta, double r,
                                      const std::function<double(double)>& w, double tol = 1e-9,
                                      double b_max = 1e3) {
    auto free_slope = [&](double b) {
        const auto coarse = solve_hjb_ode(spec, beta, r, w, b, UpperBc::smooth_fit, 1000);
        const auto fine = solve_hjb_ode(spec, beta, r, w, b, UpperBc::smooth_fit, 2000);
        return (4.0 * fine.slope_b - coarse.slope_b) / 3.0;
    };
    // free_slope decreases through 1 at b*; bracket then bisect.
    double lo = 1e-3;
    if (free_slope(lo) < 1.0) throw NoRoot("free slope below 1 already at b ~ 0");
    double hi = 1.0;
    while (free_slope(hi) >= 1.0) {
        lo = hi;
        hi *= 2.0;
        if (hi > b_max) throw NoRoot("free slope stays >= 1 up to b_max");
    }
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        (free_slope(mid) < 1.0 ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace bailout
