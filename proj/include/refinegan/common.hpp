#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace refinegan {

// ---------------------------------------------------------------------------
// Error hierarchy. The CLI maps these onto process exit codes:
//   ConfigError -> 1, FormatError/DataError -> 2, DivergenceError -> 3.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed on-disk data (MVOL headers, checkpoints).
struct FormatError : Error {
    enum class Kind { bad_magic, unknown_dtype, bad_header, truncated };
    Kind kind;
    FormatError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
};

/// Semantically invalid data: shape mismatches, degenerate statistics,
/// out-of-range labels, NaN/Inf voxels.
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(msg) {}
};

/// Bad configuration or command-line usage.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// A recorded loss or gradient went NaN/Inf during training.
struct DivergenceError : Error {
    explicit DivergenceError(const std::string& msg) : Error(msg) {}
};

// ---------------------------------------------------------------------------
// Deterministic random number helpers. std::*_distribution is
// implementation-defined, so sampling is done by hand on top of a
// fixed-width engine; runs replay bit-exactly from a seed.
// ---------------------------------------------------------------------------

using Rng = std::mt19937_64;

/// Uniform double in [0, 1).
inline double rand_uniform(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform double in [lo, hi).
inline double rand_uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * rand_uniform(rng);
}

/// Uniform integer in [0, n).
inline std::uint64_t rand_index(Rng& rng, std::uint64_t n) {
    // Modulo bias is negligible for the small n used here, but rejection
    // sampling keeps the draw exact.
    if (n == 0) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = rng();
    while (v >= limit) v = rng();
    return v % n;
}

/// Standard normal via Box-Muller; consumes exactly two engine draws.
inline double rand_normal(Rng& rng) {
    double u1 = rand_uniform(rng);
    double u2 = rand_uniform(rng);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

template <typename It>
inline void shuffle_indices(It begin, It end, Rng& rng) {
    const auto n = static_cast<std::uint64_t>(end - begin);
    for (std::uint64_t i = n; i > 1; --i)
        std::swap(begin[i - 1], begin[rand_index(rng, i)]);
}

// ---------------------------------------------------------------------------
// Worker threads. REFINEGAN_THREADS caps the pool; compute loops stay
// bitwise deterministic because work is split by disjoint output ranges
// with no cross-thread reductions.
// ---------------------------------------------------------------------------

inline int max_threads() {
    static const int cap = [] {
        if (const char* env = std::getenv("REFINEGAN_THREADS")) {
            const long v = std::strtol(env, nullptr, 10);
            if (v >= 1) return static_cast<int>(v);
        }
        const unsigned hw = std::thread::hardware_concurrency();
        return hw > 0 ? static_cast<int>(hw) : 1;
    }();
    return cap;
}

/// Runs fn(begin, end) over a partition of [0, n). Falls back to a plain
/// call when a single worker suffices.
template <typename Fn>
inline void parallel_for(std::size_t n, Fn&& fn, std::size_t min_grain = 1024) {
    const int want = max_threads();
    if (want <= 1 || n < 2 * min_grain) {
        fn(std::size_t{0}, n);
        return;
    }
    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(want), std::max<std::size_t>(1, n / min_grain));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t b = std::min(n, w * chunk);
        const std::size_t e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
    for (auto& t : pool) t.join();
}

}  // namespace refinegan
