#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace replica_cs {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Counter-based stream splitting: the stream for (master, k1, k2, ...) does
/// not depend on how many other streams exist, so trial counts can grow
/// without reshuffling earlier trials.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) noexcept;

inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    return Rng(derive_seed(master, path));
}

/// Standard normal draw via Box-Muller on the raw engine output so that
/// streams are bit-identical across standard library implementations.
double standard_normal(Rng& rng);

/// Uniform draw in [0, 1).
double uniform01(Rng& rng);

} // namespace replica_cs
