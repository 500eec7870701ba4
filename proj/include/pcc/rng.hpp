#pragma once

#include <cmath>
#include <cstdint>

namespace pcc {

// Counter-based generator built on the splitmix64 mixing function.
// Every draw is a pure function of (seed, stream, counter), so results are
// reproducible across platforms and independent of evaluation order --
// unlike the distributions in <random>, whose output is
// implementation-defined.
namespace rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// A stream is an independent substream of a seed; draws within a stream are
// indexed by a counter.
struct Stream {
    std::uint64_t state;
    std::uint64_t counter = 0;

    Stream(std::uint64_t seed, std::uint64_t stream_id)
        : state(splitmix64(seed ^ splitmix64(stream_id))) {}

    std::uint64_t next_u64() { return splitmix64(state + 0x632be59bd9b4e019ull * ++counter); }

    // Uniform in [0, 1).
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Standard normal via the polar Box-Muller method (one value per call,
    // the partner draw is discarded to keep the stream stateless-friendly).
    double normal() {
        for (;;) {
            double u = 2.0 * next_double() - 1.0;
            double v = 2.0 * next_double() - 1.0;
            double s = u * u + v * v;
            if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
        }
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Multiply-shift rejection-free mapping; bias is < 2^-64 * n,
        // negligible for the desk-scale ranges used here.
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }
};

// Poisson sampling: sequential inversion for small means, the PTRS
// transformed-rejection method of Hormann for large ones. Both consume the
// stream deterministically.
inline std::uint64_t poisson(Stream& s, double mean) {
    if (mean <= 0.0) return 0;
    if (mean < 30.0) {
        const double l = std::exp(-mean);
        double p = l;
        double cum = p;
        const double u = s.next_double();
        std::uint64_t k = 0;
        while (u > cum) {
            ++k;
            p *= mean / static_cast<double>(k);
            cum += p;
            if (k > 1000000) break;  // cum saturated by rounding
        }
        return k;
    }
    // PTRS ("Poisson Transformed Rejection with Squeeze"), W. Hormann 1993.
    const double b = 0.931 + 2.53 * std::sqrt(mean);
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);
    const double log_mean = std::log(mean);
    for (;;) {
        double u = s.next_double() - 0.5;
        double v = s.next_double();
        double us = 0.5 - std::fabs(u);
        double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
        if (us >= 0.07 && v <= v_r) return static_cast<std::uint64_t>(kf);
        if (kf < 0.0 || (us < 0.013 && v > us)) continue;
        double k = kf;
        if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
            k * log_mean - mean - std::lgamma(k + 1.0)) {
            return static_cast<std::uint64_t>(kf);
        }
    }
}

}  // namespace rng
}  // namespace pcc
