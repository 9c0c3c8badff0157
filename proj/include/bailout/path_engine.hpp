#pragma once

#include <algorithm>
#include <bit>
#include <cstring>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "bailout/levy_model.hpp"
#include "bailout/parallel.hpp"
#include "bailout/rng.hpp"

namespace bailout {

constexpr double kNoBarrier = std::numeric_limits<double>::infinity();
constexpr std::size_t kNever = static_cast<std::size_t>(-1);

/// Thrown when a requested batch would exceed the configured byte budget.
struct BatchTooLarge : std::runtime_error {
    explicit BatchTooLarge(const std::string& what)
        : std::runtime_error("OUT_OF_MEMORY: " + what) {}
};

/**
 * Seeded batch of discretized driving-noise skeletons.
 *
 * Path i is a deterministic function of (master_seed, i) alone; increments
 * are stored path-major. Reusing one batch across solver calls implements
 * common random numbers.
 */
struct PathBatch {
    std::uint64_t master_seed = 0;
    std::size_t n_paths = 0;
    double dt = 0.0;
    double horizon = 0.0;
    std::size_t n_steps = 0;
    std::vector<double> increments;  ///< [path * n_steps + k]

    std::span<const double> path(std::size_t i) const {
        return {increments.data() + i * n_steps, n_steps};
    }
};

/// One Euler step increment: drift*dt + sigma*sqrt(dt)*Z + signed jump sum.
/// Jumps within the step are aggregated (Poisson count per component).
inline double step_increment(const LevyModel& model, double dt, double sqrt_dt, StepRng& rng) {
    double dx = model.drift * dt;
    if (model.sigma > 0.0) dx += model.sigma * sqrt_dt * rng.normal();
    for (const auto& j : model.jumps) {
        const std::uint64_t count = rng.poisson(j.rate * dt);
        double total = 0.0;
        for (std::uint64_t c = 0; c < count; ++c) total += sample_jump_size(j.size_dist, rng);
        dx += (j.direction == JumpDirection::up) ? total : -total;
    }
    return dx;
}

struct BatchLimits {
    std::size_t byte_budget = std::size_t{1} << 30;  ///< 1 GiB default
};

inline std::size_t steps_for_horizon(double dt, double horizon) {
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
    const double ratio = horizon / dt;
    const auto n = static_cast<std::size_t>(std::llround(ratio));
    if (n == 0 || std::abs(ratio - static_cast<double>(n)) > 1e-9 * ratio + 1e-12)
        throw std::invalid_argument("horizon must be a positive multiple of dt");
    return n;
}

inline PathBatch simulate_batch(const LevyModel& model, double dt, double horizon,
                                std::size_t n_paths, std::uint64_t master_seed,
                                const BatchLimits& limits = {}, int n_threads = 0) {
    PathBatch batch;
    batch.master_seed = master_seed;
    batch.n_paths = n_paths;
    batch.dt = dt;
    batch.horizon = horizon;
    batch.n_steps = steps_for_horizon(dt, horizon);

    const std::size_t bytes = n_paths * batch.n_steps * sizeof(double);
    if (bytes > limits.byte_budget)
        throw BatchTooLarge("skeleton needs " + std::to_string(bytes) +
                            " bytes, budget is " + std::to_string(limits.byte_budget));

    batch.increments.resize(n_paths * batch.n_steps);
    const double sqrt_dt = std::sqrt(dt);
    const std::size_t n_steps = batch.n_steps;
    double* data = batch.increments.data();
    parallel_for(n_paths, n_threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            double* row = data + i * n_steps;
            for (std::size_t k = 0; k < n_steps; ++k) {
                StepRng rng(master_seed, i, k);
                row[k] = step_increment(model, dt, sqrt_dt, rng);
            }
        }
    });
    return batch;
}

// ---------------------------------------------------------------------------
// Reflection maps
// ---------------------------------------------------------------------------

/// One-sided reflection at an upper barrier, sampled on the grid.
struct ReflectedPath {
    std::vector<double> y;  ///< grid values, y[k] <= b
    double barrier = kNoBarrier;
};

/// Discrete running-max reflection: y_k = x_k - max(0, max_{j<=k}(x_j - b)).
/// x0 above b reflects instantaneously at t=0; b = kNoBarrier is identity.
inline ReflectedPath reflect_upper(std::span<const double> increments, double x0, double b) {
    ReflectedPath out;
    out.barrier = b;
    out.y.resize(increments.size() + 1);
    double x = x0;
    double excess = std::max(0.0, x0 - b);  // inf barrier: -inf excess -> 0
    if (b == kNoBarrier) excess = 0.0;
    out.y[0] = x - excess;
    for (std::size_t k = 0; k < increments.size(); ++k) {
        x += increments[k];
        if (x - b > excess) excess = x - b;
        out.y[k + 1] = x - excess;
    }
    return out;
}

/// First grid index with y strictly below `level`, or
/// kNever. `weak` switches to y <= level; used only in diagnostics.
inline std::size_t first_passage(const ReflectedPath& reflected, double level,
                                 bool weak = false) {
    for (std::size_t k = 0; k < reflected.y.size(); ++k) {
        const double y = reflected.y[k];
        if (weak ? (y <= level) : (y < level)) return k;
    }
    return kNever;
}

struct ZeroBarrierUnboundedVariation : std::runtime_error {
    ZeroBarrierUnboundedVariation()
        : std::runtime_error(
              "ZERO_BARRIER_UNBOUNDED_VARIATION: b=0 requires a bounded-variation model") {}
};

/// Grid-aligned doubly reflected path with dividend/injection ledgers.
struct ControlledPath {
    std::vector<double> u;      ///< controlled surplus, 0 <= u <= b
    std::vector<double> l_cum;  ///< cumulative dividends (lump at t=0 included)
    std::vector<double> r_cum;  ///< cumulative injections
};

/**
 * Discrete Skorokhod recursion on [0, b]. The surplus is always computed as
 * (x + X_k - l_cum) + r_cum in that exact order, so the ledger identity holds
 * bit-for-bit; the clamp bounds hold to rounding.
 *
 * b = kNoBarrier reflects at 0 only. `model_unbounded_variation` guards the
 * b = 0 case, which only makes sense for bounded-variation models.
 */
inline ControlledPath reflect_double(std::span<const double> increments, double x0, double b,
                                     bool model_unbounded_variation = false) {
    if (b == 0.0 && model_unbounded_variation) throw ZeroBarrierUnboundedVariation();
    ControlledPath out;
    const std::size_t n = increments.size() + 1;
    out.u.resize(n);
    out.l_cum.resize(n);
    out.r_cum.resize(n);

    double s = x0;  // free path x + X(t_k)
    double l = (b != kNoBarrier && x0 > b) ? x0 - b : 0.0;
    double r = x0 < 0.0 ? -x0 : 0.0;
    double u = (s - l) + r;
    out.u[0] = u;
    out.l_cum[0] = l;
    out.r_cum[0] = r;
    for (std::size_t k = 0; k < increments.size(); ++k) {
        s += increments[k];
        u = (s - l) + r;
        if (u > b) {
            l += u - b;
            u = (s - l) + r;
        }
        if (u < 0.0) {
            r += -u;
            u = (s - l) + r;
        }
        out.u[k + 1] = u;
        out.l_cum[k + 1] = l;
        out.r_cum[k + 1] = r;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Binary dump (replay/debugging)
// ---------------------------------------------------------------------------

// Layout: magic "BOPB", u32 version, u64 seed, u64 n_paths, f64 dt, f64 horizon,
// then n_paths * n_steps little-endian doubles, path-major.
inline void write_batch(std::ostream& os, const PathBatch& batch) {
    static_assert(std::endian::native == std::endian::little,
                  "batch dump assumes a little-endian host");
    const char magic[4] = {'B', 'O', 'P', 'B'};
    const std::uint32_t version = 1;
    os.write(magic, 4);
    os.write(reinterpret_cast<const char*>(&version), sizeof version);
    os.write(reinterpret_cast<const char*>(&batch.master_seed), sizeof batch.master_seed);
    const std::uint64_t n_paths = batch.n_paths;
    os.write(reinterpret_cast<const char*>(&n_paths), sizeof n_paths);
    os.write(reinterpret_cast<const char*>(&batch.dt), sizeof batch.dt);
    os.write(reinterpret_cast<const char*>(&batch.horizon), sizeof batch.horizon);
    os.write(reinterpret_cast<const char*>(batch.increments.data()),
             static_cast<std::streamsize>(batch.increments.size() * sizeof(double)));
}

inline PathBatch read_batch(std::istream& is) {
    char magic[4];
    std::uint32_t version = 0;
    PathBatch batch;
    std::uint64_t n_paths = 0;
    is.read(magic, 4);
    is.read(reinterpret_cast<char*>(&version), sizeof version);
    if (!is || std::memcmp(magic, "BOPB", 4) != 0 || version != 1)
        throw std::runtime_error("not a path-batch dump");
    is.read(reinterpret_cast<char*>(&batch.master_seed), sizeof batch.master_seed);
    is.read(reinterpret_cast<char*>(&n_paths), sizeof n_paths);
    is.read(reinterpret_cast<char*>(&batch.dt), sizeof batch.dt);
    is.read(reinterpret_cast<char*>(&batch.horizon), sizeof batch.horizon);
    batch.n_paths = n_paths;
    batch.n_steps = steps_for_horizon(batch.dt, batch.horizon);
    batch.increments.resize(batch.n_paths * batch.n_steps);
    is.read(reinterpret_cast<char*>(batch.increments.data()),
            static_cast<std::streamsize>(batch.increments.size() * sizeof(double)));
    if (!is) throw std::runtime_error("truncated path-batch dump");
    return batch;
}

} // namespace bailout
