#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace rili {

// xoshiro256++ seeded through splitmix64. Self-contained so that streams are
// reproducible byte-for-byte across platforms and standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) {
        uint64_t x = seed;
        for (auto& s : state_) s = splitmix(x);
    }

    // Independent stream derived from (seed, tag). Used to decorrelate the
    // per-purpose streams (init, shuffle, synth, ...) of one run seed.
    static Rng derive(uint64_t seed, std::string_view tag, uint64_t salt = 0) {
        uint64_t h = 1469598103934665603ull; // FNV-1a
        for (char c : tag) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
        uint64_t x = seed;
        uint64_t a = splitmix(x);
        x ^= h;
        uint64_t b = splitmix(x);
        x ^= salt * 0x9e3779b97f4a7c15ull;
        return Rng(a ^ splitmix(x) ^ (b << 1));
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    uint64_t uniform_int(uint64_t n) {
        // Rejection to stay unbiased.
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller without the cached spare: one normal per pair of uniforms,
    // so the stream position never depends on call parity.
    double normal(double mean = 0.0, double std = 1.0) {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + std * r * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Normal(0, std) rejected outside +-2 std, the usual transformer init.
    double trunc_normal(double std) {
        for (;;) {
            const double v = normal(0.0, std);
            if (std::abs(v) <= 2.0 * std) return v;
        }
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static uint64_t splitmix(uint64_t& x) {
        uint64_t z = (x += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t state_[4];
};

} // namespace rili
