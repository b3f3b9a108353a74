#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fppe {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for a named sub-stream of a master seed. Distinct tag paths give
/// distinct seeds, so replicates never share generator state.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t s = mix64(master);
    for (std::uint64_t tag : tags) s = mix64(s ^ mix64(tag + 0x632be59bd9b4e019ULL));
    return s;
}

inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> tags) {
    return Rng(derive_seed(master, tags));
}

// Stream tags used across the library.
namespace stream {
inline constexpr std::uint64_t items = 1;
inline constexpr std::uint64_t budgets = 2;
inline constexpr std::uint64_t bootstrap = 3;
inline constexpr std::uint64_t replicate = 4;
inline constexpr std::uint64_t reference = 5;
inline constexpr std::uint64_t arm = 6;
inline constexpr std::uint64_t auctions = 7;
inline constexpr std::uint64_t calibration = 8;
}  // namespace stream

}  // namespace fppe
