#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace openenv {

using Rng = std::mt19937_64;

// Decorrelated child seed for an independent stream (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// `k` distinct elements of `pool` in random order.
template <typename T>
std::vector<T> sample_without_replacement(std::span<const T> pool, std::size_t k, Rng& rng) {
    std::vector<T> items(pool.begin(), pool.end());
    std::shuffle(items.begin(), items.end(), rng);
    items.resize(std::min(k, items.size()));
    return items;
}

template <typename T>
std::vector<T> sample_without_replacement(const std::vector<T>& pool, std::size_t k, Rng& rng) {
    return sample_without_replacement(std::span<const T>(pool), k, rng);
}

}  // namespace openenv
