#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace bwvi {

/// Deterministic random stream. One consumer at a time.
using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Combine a parent key with a child index into a new, well-mixed key.
constexpr std::uint64_t mix_key(std::uint64_t parent, std::uint64_t child) {
    return splitmix64(parent ^ splitmix64(child + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t mix_key(std::uint64_t root, std::initializer_list<std::uint64_t> children) {
    std::uint64_t k = root;
    for (auto c : children) k = mix_key(k, c);
    return k;
}

/// FNV-1a, used to fold names into stream keys and to stamp configs.
constexpr std::uint64_t hash64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline Rng substream(std::uint64_t key) { return Rng(key); }

inline double standard_normal(Rng& rng) {
    std::normal_distribution<double> n01;
    return n01(rng);
}

inline double uniform01(Rng& rng) {
    std::uniform_real_distribution<double> u;
    return u(rng);
}

/// rows x cols matrix of N(0,1) draws, filled row by row.
inline Eigen::MatrixXd standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> n01;
    Eigen::MatrixXd out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = n01(rng);
    return out;
}

}  // namespace bwvi
