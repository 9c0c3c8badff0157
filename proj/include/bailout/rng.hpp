#pragma once

#include <cstdint>
#include <cmath>
#include <limits>

namespace bailout {

/// SplitMix64 finalizer; bijective mixing of a 64-bit word.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
}

/**
 * Counter-based random stream keyed on (master_seed, path, step).
 *
 * Every (path, step) pair owns an independent stream derived purely from the
 * key, so any parallel schedule that assigns work by index reproduces the
 * same draws bit-for-bit. Streams for non-step purposes (regime chains,
 * switch jumps) use tag constants far above any realistic step index.
 */
class StepRng {
public:
    static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

    // Tags for auxiliary per-path streams; step indices stay far below these.
    static constexpr std::uint64_t kTagChain = 0xffffffff00000001ULL;

    StepRng(std::uint64_t master_seed, std::uint64_t path, std::uint64_t step) {
        std::uint64_t s = master_seed;
        s = mix64(s + kGamma * (path + 1));
        s = mix64(s + kGamma * (step + 1));
        state_ = s;
    }

    std::uint64_t next_u64() {
        state_ += kGamma;
        return mix64(state_);
    }

    /// Uniform draw in (0, 1]; never returns 0 so log() is safe.
    double uniform() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; the spare draw is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * kPi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    /// Exact Poisson count (Knuth product method, halved recursively so the
    /// running product never underflows for large means).
    std::uint64_t poisson(double mean) {
        if (mean <= 0.0) return 0;
        std::uint64_t count = 0;
        while (mean > 32.0) {
            count += poisson_small(mean / 2.0);
            mean /= 2.0;
        }
        return count + poisson_small(mean);
    }

    double exponential(double mean) { return -mean * std::log(uniform()); }

    double weibull(double shape, double scale) {
        return scale * std::pow(-std::log(uniform()), 1.0 / shape);
    }

    double half_normal(double scale) { return std::abs(scale * normal()); }

private:
    static constexpr double kPi = 3.14159265358979323846;

    std::uint64_t poisson_small(double mean) {
        const double limit = std::exp(-mean);
        std::uint64_t k = 0;
        double product = uniform();
        while (product > limit) {
            ++k;
            product *= uniform();
        }
        return k;
    }

    std::uint64_t state_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace bailout
