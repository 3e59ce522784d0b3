#include "caa/rng.hpp"

#include <random>

namespace caa {

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t Rng::substream_seed(std::string_view name) const {
  return splitmix64(seed_ ^ fnv1a64(name));
}

Tensor Rng::uniform(std::string_view name, Shape shape, double lo, double hi, DType dtype) const {
  std::mt19937_64 engine(substream_seed(name));
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) {
    const double unit = static_cast<double>(engine() >> 11) * 0x1.0p-53;
    v = lo + (hi - lo) * unit;
  }
  return Tensor::from_values(std::move(shape), values, dtype);
}

std::vector<std::size_t> Rng::permutation(std::string_view name, std::size_t n) const {
  std::mt19937_64 engine(substream_seed(name));
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    // Rejection sampling keeps the draw unbiased without std distributions.
    const std::uint64_t bound = i;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t r;
    do {
      r = engine();
    } while (r >= limit);
    std::swap(perm[i - 1], perm[r % bound]);
  }
  return perm;
}

}  // namespace caa
