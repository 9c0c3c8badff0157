#pragma once

#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <span>
#include <thread>
#include <vector>

namespace bailout {

/// Resolve a thread-count request: explicit value wins, then the
/// BAILOUT_THREADS environment variable, then hardware concurrency.
inline unsigned resolve_threads(int requested = 0) {
    if (requested > 0) return static_cast<unsigned>(requested);
    if (const char* env = std::getenv("BAILOUT_THREADS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n > 0) return static_cast<unsigned>(n);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

/// Run fn(begin, end) over a static partition of [0, n). Workers touch
/// disjoint index ranges only; results must depend on the index alone so the
/// outcome is independent of the partition.
template <class Fn>
void parallel_for(std::size_t n, int n_threads, Fn&& fn) {
    const unsigned threads = resolve_threads(n_threads);
    if (n == 0) return;
    if (threads <= 1 || n < 2 * threads) {
        fn(std::size_t{0}, n);
        return;
    }
    const std::size_t chunk = (n + threads - 1) / threads;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
        const std::size_t begin = t * chunk;
        if (begin >= n) break;
        const std::size_t end = std::min(n, begin + chunk);
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    for (auto& th : pool) th.join();
}

/// Pairwise tree sum with a fixed reduction shape. The result depends only
/// on the input values, never on thread count or chunking.
inline double tree_sum(std::span<const double> xs) {
    const std::size_t n = xs.size();
    if (n <= 8) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const std::size_t half = n / 2;
    return tree_sum(xs.first(half)) + tree_sum(xs.subspan(half));
}

struct MeanCi {
    double mean = 0.0;
    double se = 0.0;          ///< standard error of the mean
    double half_width = 0.0;  ///< 95% confidence half-width
    std::size_t n = 0;
};

/// Sample mean with a 95% normal confidence half-width, reduced with the
/// deterministic tree so repeated runs agree bitwise.
inline MeanCi mean_ci(std::span<const double> xs) {
    MeanCi out;
    out.n = xs.size();
    if (out.n == 0) return out;
    const double sum = tree_sum(xs);
    out.mean = sum / static_cast<double>(out.n);
    if (out.n < 2) return out;
    std::vector<double> sq(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double d = xs[i] - out.mean;
        sq[i] = d * d;
    }
    const double ss = tree_sum(sq);
    const double var = ss / static_cast<double>(out.n - 1);
    out.se = std::sqrt(var / static_cast<double>(out.n));
    out.half_width = 1.959963984540054 * out.se;
    return out;
}

} // namespace bailout
