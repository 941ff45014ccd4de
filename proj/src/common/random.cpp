#include "critpath/random.hpp"

#include "critpath/error.hpp"

namespace critpath {

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix_seed(mix_seed(seed) ^ (stream * 0xd1b54a32d192ed03ULL + 1));
}

std::size_t uniform_index(Rng& rng, std::size_t bound) {
  if (bound == 0) throw InvalidArgument("uniform_index: empty range");
  std::uniform_int_distribution<std::size_t> dist(0, bound - 1);
  return dist(rng);
}

}  // namespace critpath
