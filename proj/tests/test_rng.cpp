#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "bailout/levy_model.hpp"
#include "bailout/rng.hpp"

using namespace bailout;

TEST_CASE("streams are pure functions of the key") {
    StepRng a(42, 7, 3);
    StepRng b(42, 7, 3);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

    StepRng c(42, 7, 4);
    StepRng d(42, 8, 3);
    StepRng e(43, 7, 3);
    StepRng f(42, 7, 3);
    bool all_same = true;
    for (int i = 0; i < 16; ++i) {
        const auto x = f.next_u64();
        all_same = all_same && c.next_u64() == x && d.next_u64() == x && e.next_u64() == x;
    }
    REQUIRE_FALSE(all_same);
}

TEST_CASE("uniform stays in (0, 1]") {
    StepRng rng(1, 2, 3);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        REQUIRE(u > 0.0);
        REQUIRE(u <= 1.0);
    }
}

TEST_CASE("normal moments") {
    StepRng rng(9, 0, 0);
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sumsq += z * z;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    REQUIRE(std::abs(mean) < 3.0 / std::sqrt(double(n)));
    REQUIRE(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / n));
}

TEST_CASE("poisson mean for small and large rates") {
    StepRng rng(11, 1, 1);
    for (double mean : {0.04, 3.5, 120.0}) {  // 120 exercises the halving path
        const int n = 20000;
        double sum = 0.0;
        for (int i = 0; i < n; ++i) sum += static_cast<double>(rng.poisson(mean));
        const double se = std::sqrt(mean / n);
        REQUIRE(std::abs(sum / n - mean) < 4.0 * se);
    }
}

// Empirical mean of each jump-size family within 3 standard errors of the
// analytic mean, over 1e5 samples.
TEST_CASE("jump size families have the advertised finite means") {
    struct Case {
        JumpSizeDist dist;
        double var;  // population variance, for the standard error
    };
    const double weibull_mean = std::tgamma(1.5);
    const std::vector<Case> cases = {
        {ExponentialSize{0.7}, 0.49},
        {WeibullSize{2.0, 1.0}, 1.0 - weibull_mean * weibull_mean},
        {HalfNormalSize{1.3}, 1.3 * 1.3 * (1.0 - 2.0 / 3.14159265358979323846)},
        {FixedSize{0.9}, 0.0},
    };
    const std::size_t n = 100000;
    std::size_t stream = 0;
    for (const auto& c : cases) {
        StepRng rng(77, stream++, 0);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += sample_jump_size(c.dist, rng);
        const double mean = sum / static_cast<double>(n);
        const double analytic = jump_size_mean(c.dist);
        REQUIRE(std::isfinite(mean));
        const double se = std::sqrt(c.var / static_cast<double>(n));
        REQUIRE(std::abs(mean - analytic) <= 3.0 * se + 1e-12);
    }
}
