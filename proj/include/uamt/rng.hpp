#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace uamt {

// All randomness in the project flows through these primitives so that
// every artifact is a pure function of the master seed, independent of
// platform and thread count. Sequential draws use xoshiro256++; per-voxel
// noise and dropout masks use the stateless hash path below, which is safe
// to evaluate from any thread in any order.

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t seed, uint64_t tag) {
    return splitmix64(seed ^ splitmix64(tag));
}

inline uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b) {
    return mix_seed(mix_seed(seed, a), b);
}

inline uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b, uint64_t c) {
    return mix_seed(mix_seed(seed, a, b), c);
}

inline uint64_t hash_name(std::string_view name) {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t mix_seed(uint64_t seed, std::string_view name) {
    return mix_seed(seed, hash_name(name));
}

class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed) {
        uint64_t s = seed;
        for (auto& w : state_) w = splitmix64(s += 0x9e3779b97f4a7c15ULL);
    }

    uint64_t next_u64() {
        // xoshiro256++
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

    // [0, 1), 53-bit resolution
    double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // standard normal via Box-Muller; draws exactly two words, keeps no cache
    double normal() {
        const double u1 = double((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        const double u2 = double(next_u64() >> 11) * 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    // unbiased integer in [0, n), n >= 1
    int64_t uniform_int(int64_t n) {
        const uint64_t un = uint64_t(n);
        const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return int64_t(x % un);
    }

    template <class Vec>
    void shuffle(Vec& v) {
        for (int64_t i = int64_t(v.size()) - 1; i > 0; --i) {
            const int64_t j = uniform_int(i + 1);
            std::swap(v[size_t(i)], v[size_t(j)]);
        }
    }

    // independent child stream; does not advance this stream
    Rng fork(uint64_t tag) const { return Rng(mix_seed(seed_, tag)); }
    Rng fork(std::string_view name) const { return Rng(mix_seed(seed_, name)); }

    uint64_t seed() const { return seed_; }
    std::array<uint64_t, 4> state() const { return state_; }
    void set_state(const std::array<uint64_t, 4>& s) { state_ = s; }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t seed_;
    std::array<uint64_t, 4> state_{};
};

// ---- stateless (counter-based) randomness -------------------------------

inline uint64_t hash_u64(uint64_t seed, uint64_t idx) {
    return splitmix64(seed ^ (idx * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL));
}

// [0, 1)
inline double hash_uniform01(uint64_t seed, uint64_t idx) {
    return double(hash_u64(seed, idx) >> 11) * 0x1.0p-53;
}

// standard normal from one (seed, idx) pair
inline double hash_normal(uint64_t seed, uint64_t idx) {
    const uint64_t a = hash_u64(seed, 2 * idx);
    const uint64_t b = hash_u64(seed, 2 * idx + 1);
    const double u1 = double((a >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = double(b >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
}

}  // namespace uamt
