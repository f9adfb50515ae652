#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "cuebench/common.hpp"

namespace cuebench {

// Deterministic RNG used everywhere randomness is needed.  splitmix64 is
// small, fast and has guaranteed cross-platform behaviour, unlike the
// std::uniform_* distributions whose output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Unbiased integer in [0, n) via rejection sampling.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw invariant_error("Rng::below: n must be positive");
        std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = next();
            if (r >= threshold) return r % n;
        }
    }

    // Uniform double in [0, 1).
    double uniform() { return double(next() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

private:
    std::uint64_t state_;
};

// Seed fan-out.  Derived seeds are decorrelated hashes of the master seed
// plus a context tag, so independent pipeline stages never share a stream
// and adding a stage never perturbs the streams of existing ones.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t salt) {
    Rng r(master ^ (salt * 0xd6e8feb86659fd93ull + 0x2545f4914f6cdd1dull));
    return r.next();
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
    // FNV-1a over the label folded into the master seed.
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return derive_seed(master, h);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                                 std::uint64_t salt) {
    return derive_seed(derive_seed(master, label), salt);
}

// Fisher-Yates shuffle.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = std::size_t(rng.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

// k distinct elements drawn uniformly from v, in draw order.
template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> v, std::size_t k, Rng& rng) {
    if (k > v.size()) k = v.size();
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + std::size_t(rng.below(v.size() - i));
        std::swap(v[i], v[j]);
    }
    v.resize(k);
    return v;
}

} // namespace cuebench
