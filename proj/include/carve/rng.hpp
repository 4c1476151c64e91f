#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string_view>

#include "carve/common.hpp"

namespace carve {

// Deterministic random source built on splitmix64. All sampling in the
// project goes through this type so that results are bit-identical for a
// given seed regardless of platform or standard-library version.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller. No second-value caching: each call
    // consumes exactly two uniforms, which keeps substreams independent of
    // call history.
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double variance) { return mean + std::sqrt(variance) * normal(); }

    // Marsaglia-Tsang; requires shape >= 1 (all distributions used here qualify).
    double gamma(double shape, double scale) {
        if (shape < 1.0) throw ValidationError("Rng::gamma: shape < 1 unsupported");
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double t = 1.0 + c * x;
            if (t <= 0.0) continue;
            double v = t * t * t;
            double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return scale * d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return scale * d * v;
        }
    }

    double bernoulli(double p) { return uniform() < p ? 1.0 : 0.0; }

    // Index into probs by inverse CDF.
    double categorical(std::span<const double> probs) {
        double u = uniform();
        double acc = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) return static_cast<double>(i);
        }
        return static_cast<double>(probs.size() - 1);
    }

    double gaussian_mixture(std::span<const double> weights, std::span<const double> means,
                            std::span<const double> variances) {
        std::size_t k = static_cast<std::size_t>(categorical(weights));
        return normal(means[k], variances[k]);
    }

private:
    std::uint64_t state_;
};

// Mixing function for derived streams: one splitmix64 scramble of the seed,
// xored with the stream id and scrambled again. Row-parallel generation with
// derive_stream(seed, row) is byte-identical to sequential generation.
inline std::uint64_t mix_stream(std::uint64_t seed, std::uint64_t stream_id) {
    Rng a(seed);
    std::uint64_t h = a.next_u64() ^ (stream_id + 0x9E3779B97F4A7C15ull);
    Rng b(h);
    return b.next_u64();
}

inline Rng derive_stream(std::uint64_t seed, std::uint64_t stream_id) {
    return Rng(mix_stream(seed, stream_id));
}

// Named component streams (data / detector / engine / policy) hang off one
// root seed.
inline std::uint64_t named_stream(std::uint64_t root_seed, std::string_view name) {
    return mix_stream(root_seed, fnv1a(name));
}

}  // namespace carve
