#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace irdet {

// std::*_distribution output is implementation-defined, so the helpers below
// derive uniform/normal draws from raw engine words. mt19937_64 itself is
// fully specified by the standard.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t raw() { return engine_(); }

    // [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(raw() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n), unbiased
    uint64_t uniform_int(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = raw();
        } while (v >= limit);
        return v % n;
    }

    // Box-Muller; one draw per call, no cached second value so replay offsets
    // stay aligned no matter how calls interleave.
    double normal() {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

    // index draw proportional to non-negative weights (sum > 0); an index
    // with zero weight is never returned
    int weighted_index(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        double u = uniform() * total;
        int last_positive = -1;
        for (size_t i = 0; i < weights.size(); ++i) {
            if (weights[i] <= 0.0) continue;
            last_positive = static_cast<int>(i);
            u -= weights[i];
            if (u < 0.0) return last_positive;
        }
        return last_positive;
    }

private:
    std::mt19937_64 engine_;
};

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Independent stream derivation: derive_seed(s, a) and derive_seed(s, b) are
// decorrelated for a != b. Chain for multi-part keys.
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
    return splitmix64(seed ^ splitmix64(stream ^ 0x6a09e667f3bcc909ull));
}

inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b) {
    return derive_seed(derive_seed(seed, a), b);
}

} // namespace irdet
