#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace d2v {

/// Deterministic splitmix64 generator. All randomness in the project flows
/// through this class so that results are bit-identical across platforms and
/// standard-library versions (std::normal_distribution is not portable).
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (no cached spare; one draw = two uniforms).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Unbiased integer in [0, n) by rejection.
    uint64_t below(uint64_t n) {
        if (n == 0) return 0;
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % n;
    }

    int randint(int n) { return int(below(uint64_t(n))); }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<int> permutation(int n) {
        std::vector<int> p(n);
        for (int i = 0; i < n; ++i) p[i] = i;
        shuffle(p);
        return p;
    }

    uint64_t state() const { return state_; }
    void set_state(uint64_t s) { state_ = s; }

    /// Derives an independent stream from a seed and a tag (avalanched so
    /// that nearby tags give unrelated streams).
    static uint64_t mix(uint64_t a, uint64_t b) {
        uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    static Rng derive(uint64_t seed, uint64_t tag) { return Rng(mix(seed, tag)); }
    static Rng derive(uint64_t seed, uint64_t tag1, uint64_t tag2) {
        return Rng(mix(mix(seed, tag1), tag2));
    }

private:
    uint64_t state_;
};

} // namespace d2v
