#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace wsseg {

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 14695981039346656037ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t fnv1a64_u64(uint64_t v, uint64_t h) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffu;
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Portable xorshift64* generator. Reproducible across platforms and
// processes (no implementation-defined library distributions).
class Rng {
public:
    explicit Rng(uint64_t seed) {
        state_ = seed ? splitmix64(seed) : 0x9e3779b97f4a7c15ull;
        next_u64();
    }

    uint64_t next_u64() {
        uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545f4914f6cdd1dull;
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // index in [0, n)
    uint64_t below(uint64_t n) { return next_u64() % n; }

    bool coin(double p = 0.5) { return uniform() < p; }

    // Standard normal via Box-Muller.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(6.28318530717958647692528676655900577 * u2);
    }

    // Truncated at +-2 sigma, resampling.
    double trunc_normal(double sigma) {
        for (;;) {
            double z = normal();
            if (std::fabs(z) <= 2.0) return z * sigma;
        }
    }

    // Derive an independent stream without consuming this generator.
    Rng fork(uint64_t stream) const {
        return Rng(splitmix64(state_ ^ (stream + 0x632be59bd9b4e019ull)));
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
};

}  // namespace wsseg
