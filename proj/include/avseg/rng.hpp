#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "avseg/tensor.hpp"

namespace avseg {

// SplitMix64 generator. Chosen over std::mt19937 + std distributions because
// the distribution outputs here must be identical across standard libraries;
// every stochastic path in the project flows through this type.
class Rng {
  public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // uniform in [0,1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int64_t uniform_int(int64_t n) {  // [0, n)
        return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
    }

    // Box-Muller, no cached spare so the stream is position-independent.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        u1 = std::max(u1, 0x1.0p-53);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    Tensor normal_tensor(Shape shape, double stddev = 1.0) {
        Tensor t(std::move(shape));
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = stddev * normal();
        return t;
    }

    Tensor uniform_tensor(Shape shape, double lo, double hi) {
        Tensor t(std::move(shape));
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = uniform(lo, hi);
        return t;
    }

  private:
    uint64_t state_;
};

// FNV-1a based mixing for deriving independent substreams, e.g. per clip or
// per training step.
inline uint64_t hash_mix(uint64_t a, uint64_t b) {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (int i = 0; i < 8; ++i) {
        h ^= (a >> (8 * i)) & 0xFF;
        h *= 0x100000001B3ULL;
    }
    for (int i = 0; i < 8; ++i) {
        h ^= (b >> (8 * i)) & 0xFF;
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline uint64_t hash_str(std::string_view s, uint64_t seed = 0xCBF29CE484222325ULL) {
    uint64_t h = seed;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace avseg
