#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "caa/container.hpp"
#include "caa/oracle.hpp"

namespace caa::fixtures {

/// A seeded channelized-attention instance: input, projections and all gates.
struct Model {
  Tensor x;  // [C, H, W]
  AttnParams attn;
  GateParams column;
  GateParams row;
  GateParams self;
};

struct GateConfig {
  std::size_t layer_count = 5;
  std::size_t hidden_width = 4;
  Activation activation;
};

/// Deterministic in (dims, gates, seed, dtype). Tensor substreams are named
/// x, attn.theta, attn.phi, attn.g, column.w<k>, row.w<k>, self.w<k>.
Model make_model(const AttnDims& dims, const GateConfig& gates, std::uint64_t seed,
                 DType dtype = DType::Float64);

struct FixtureSize {
  std::size_t H, W, C;
};

struct FixtureConfig {
  std::uint64_t seed = 42;
  std::vector<FixtureSize> sizes{{3, 3, 2}, {4, 4, 3}, {5, 4, 3}};
  GateConfig gates;
};

/// "caa_h<H>_w<W>_c<C>"
std::string fixture_name(const FixtureSize& size);

/// Model tensors plus oracle outputs expected.caa, expected.axial and
/// expected.self. Throws CapacityError if the oracle refuses the size.
container::Bundle make_fixture(const FixtureSize& size, const FixtureConfig& config,
                               const oracle::OracleCaps& caps);
Model model_from_bundle(const container::Bundle& bundle);

/// Writes one bundle directory per size and an `index.txt` listing them.
/// Returns the bundle names in order.
std::vector<std::string> write_fixtures(const std::filesystem::path& dir,
                                        const FixtureConfig& config,
                                        const oracle::OracleCaps& caps);

struct ReplayResult {
  std::string name;
  bool oracle_bitwise = false;  // oracle rerun reproduces every stored output exactly
  double efficient_error = 0;   // worst relative error of the efficient kernels
};

/// Replays every bundle listed in `dir/index.txt`.
std::vector<ReplayResult> replay_fixtures(const std::filesystem::path& dir,
                                          const oracle::OracleCaps& caps);

}  // namespace caa::fixtures
