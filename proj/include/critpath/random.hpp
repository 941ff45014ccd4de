#pragma once

#include <cstdint>
#include <random>

namespace critpath {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent seed streams.
std::uint64_t mix_seed(std::uint64_t x);

// Derives a child seed from a parent seed and a stream index, e.g.
// (run seed, class id) or (class seed, restart index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Uniform integer in [0, bound). bound must be > 0.
std::size_t uniform_index(Rng& rng, std::size_t bound);

}  // namespace critpath
