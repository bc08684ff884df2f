#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mvtune {

/// splitmix64 step; cheap stateless hashing for seed derivation.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Combines a seed with stream identifiers so independent RNG streams can be
/// derived per (purpose, unit) pair. Deterministic and order-sensitive.
inline uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b = 0) {
    uint64_t h = splitmix64(seed ^ 0x6d76742d6d697800ULL);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    return h;
}

inline std::mt19937_64 make_rng(uint64_t seed, uint64_t a = 0, uint64_t b = 0) {
    return std::mt19937_64(mix_seed(seed, a, b));
}

/// Uniform in (0, 1]; never returns 0 so it is safe under log().
inline double hash_u01(uint64_t h) {
    return (static_cast<double>(h >> 11) + 1.0) * 0x1.0p-53;
}

/// Dot product with four independent accumulators. The fixed summation scheme
/// keeps results bit-reproducible across runs.
inline double dot(std::span<const float> a, std::span<const float> b) {
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    size_t n = a.size();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += static_cast<double>(a[i]) * b[i];
        s1 += static_cast<double>(a[i + 1]) * b[i + 1];
        s2 += static_cast<double>(a[i + 2]) * b[i + 2];
        s3 += static_cast<double>(a[i + 3]) * b[i + 3];
    }
    for (; i < n; ++i) s0 += static_cast<double>(a[i]) * b[i];
    return (s0 + s1) + (s2 + s3);
}

/// Scales v to unit L2 norm. Returns false if the vector was (numerically)
/// zero, in which case v is replaced by the first basis vector.
bool l2_normalize(std::span<float> v);

void log_warn(const std::string& msg);

/// Enumerates all size-r subsets of [0, n) in lexicographic order.
void for_each_combination(int n, int r, const std::function<void(const std::vector<int>&)>& fn);

} // namespace mvtune
