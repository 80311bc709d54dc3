#pragma once

#include <cstdint>
#include <random>

namespace textcausal {

// splitmix64 finalizer, used to whiten seeds and to derive independent
// per-stream seeds from (seed, stream index) pairs.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d4a9b87c4e2d61ULL;
    return x ^ (x >> 31);
}

// Derived-seed convention: stream k of a seeded computation gets its own
// engine so results do not depend on thread count or evaluation order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x51ed2701ULL));
}

inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream = 0) {
    return std::mt19937_64(derive_seed(seed, stream));
}

}  // namespace textcausal
