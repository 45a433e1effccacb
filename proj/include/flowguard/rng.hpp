#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "tensor.hpp"

namespace flowguard {

/// Seeded RNG with a fixed Gaussian algorithm. std::normal_distribution is
/// implementation-defined, so Box-Muller is done by hand to keep generated
/// datasets reproducible for a given seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Derive an independent stream, e.g. per (seed, record index).
    static Rng derive(std::uint64_t seed, std::uint64_t stream) {
        // splitmix64 over the pair
        std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        x ^= x >> 30; x *= 0xbf58476d1ce4e5b9ULL;
        x ^= x >> 27; x *= 0x94d049bb133111ebULL;
        x ^= x >> 31;
        return Rng(x);
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0,1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // modulo bias is negligible for n << 2^64
        return engine_() % n;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

inline Tensor gaussian_tensor(const std::vector<std::size_t>& dims, Rng& rng) {
    std::vector<float> v(Tensor::element_count(dims));
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return Tensor(dims, std::move(v));
}

}  // namespace flowguard
