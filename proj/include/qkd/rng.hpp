#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace qkd {

/// Deterministic random source. std::mt19937_64 supplies the raw 64-bit
/// stream; all derived draws (uniform doubles, small integers, Poisson)
/// are implemented here so that sequences are identical across standard
/// library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n).
    std::uint32_t uniform_int(std::uint32_t n) {
        return static_cast<std::uint32_t>(uniform() * n);
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Poisson sample by CDF inversion; intended for small means (mu <~ 10).
    unsigned poisson(double mu) {
        if (mu <= 0.0) return 0;
        double u = uniform();
        double p = std::exp(-mu);
        double cdf = p;
        unsigned k = 0;
        while (u > cdf && k < 1000) {
            ++k;
            p *= mu / k;
            cdf += p;
        }
        return k;
    }

private:
    std::mt19937_64 gen_;
};

/// splitmix64 step; used to derive independent per-shard seeds.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace qkd
