// clevercatch/rng.hpp
// Seeded random stream with portable distributions.
//
// std::mt19937_64 is fully specified by the standard, but the <random>
// distributions are not, so every distribution used by the pipeline is
// implemented here on top of raw engine output. Same seed, same stream, on
// every conforming toolchain.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "clevercatch/error.hpp"

namespace clevercatch {

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed for a named pipeline stage derived from the root seed.
inline std::uint64_t stage_seed(std::uint64_t root, std::string_view label) {
    return splitmix64(root ^ fnv1a64(label));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), rejection sampled to avoid modulo bias.
    std::size_t index(std::size_t n) {
        if (n == 0) throw ContractError("Rng::index: empty range");
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<std::size_t>(x % bound);
    }

    // Standard normal via the Marsaglia polar method.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Gamma(shape, 1) by Marsaglia-Tsang, with the shape<1 boost.
    double gamma(double shape) {
        if (!(shape > 0.0)) throw ContractError("Rng::gamma: shape must be positive");
        if (shape < 1.0) {
            double u;
            do {
                u = uniform();
            } while (u == 0.0);
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    std::vector<double> dirichlet(std::span<const double> alpha) {
        std::vector<double> out(alpha.size());
        double total = 0.0;
        for (std::size_t k = 0; k < alpha.size(); ++k) {
            out[k] = gamma(alpha[k]);
            total += out[k];
        }
        if (total <= 0.0) {
            // Every gamma draw underflowed; fall back to the largest alpha.
            std::size_t best = 0;
            for (std::size_t k = 1; k < alpha.size(); ++k)
                if (alpha[k] > alpha[best]) best = k;
            std::fill(out.begin(), out.end(), 0.0);
            if (!out.empty()) out[best] = 1.0;
            return out;
        }
        for (double& x : out) x /= total;
        return out;
    }

    // Draw an index with probability proportional to `weights` (all >= 0).
    std::size_t categorical(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        if (!(total > 0.0)) throw ContractError("Rng::categorical: weights sum to zero");
        const double target = uniform() * total;
        double acc = 0.0;
        for (std::size_t k = 0; k < weights.size(); ++k) {
            acc += weights[k];
            if (target < acc) return k;
        }
        for (std::size_t k = weights.size(); k-- > 0;)
            if (weights[k] > 0.0) return k;
        return weights.size() - 1;
    }

    template <class T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = index(i);
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace clevercatch
