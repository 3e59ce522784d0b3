#pragma once

#include <cstdint>
#include <string_view>

#include "caa/tensor.hpp"

namespace caa {

/// Seeded source of random tensors.
///
/// Each tensor draws from its own substream: a std::mt19937_64 engine seeded
/// with splitmix64(seed ^ fnv1a64(name)). mt19937_64's output sequence is
/// fixed by the C++ standard and values are built from raw 53-bit draws, so
/// results are identical across runs, compilers and platforms, and do not
/// depend on the order in which tensors are requested.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t substream_seed(std::string_view name) const;

  /// Uniform in [lo, hi), generated in float64 and rounded to `dtype`.
  Tensor uniform(std::string_view name, Shape shape, double lo, double hi,
                 DType dtype = DType::Float64) const;

  /// A uniformly random permutation of 0..n-1 (Fisher-Yates on the substream).
  std::vector<std::size_t> permutation(std::string_view name, std::size_t n) const;

 private:
  std::uint64_t seed_;
};

std::uint64_t fnv1a64(std::string_view text);
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace caa
