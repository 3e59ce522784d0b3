#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "caa/tensor.hpp"

namespace caa::verify {

struct VerifyOptions {
  std::uint64_t seed = 42;
  std::size_t seed_count = 3;  // seeds seed, seed+1, ...
  DType dtype = DType::Float64;
  std::vector<std::size_t> heights{1, 2, 3, 4, 5};
  std::vector<std::size_t> widths{1, 2, 3, 4, 5};
  std::vector<std::size_t> channels{1, 2, 3, 4};
  std::vector<std::size_t> value_channels{1, 2, 3, 4};
  std::vector<std::size_t> depths{1, 3, 5};
  std::size_t hidden_width = 4;
  /// Heights for the group-invariance suite (plus every `heights` entry).
  std::vector<std::size_t> group_heights{5, 32, 33};
  /// Perturbs a column-gate weight in the efficient path only.
  bool mutate = false;
  /// Fixture directory to replay; empty skips the suite.
  std::filesystem::path fixtures;
};

/// Tolerances for each suite; float32 runs widen the oracle comparison.
struct Tolerances {
  double oracle;
  double normalization = 1e-12;
  double equivariance;
  double gradient = 1e-5;
  double fixture_efficient;

  static Tolerances for_dtype(DType dtype);
};

struct CaseResult {
  std::string suite;
  std::string kernel;
  std::size_t H = 0, W = 0, C = 0, Cv = 0;
  std::size_t depth = 0;
  std::string activation;
  std::uint64_t seed = 0;
  double error = 0;
  double tolerance = 0;
  bool passed = true;
  std::string detail;
};

struct SuiteResult {
  std::string name;
  std::size_t cases = 0;
  std::size_t failures = 0;
  double worst_error = 0;
  double tolerance = 0;  // 0 means bitwise
  std::optional<CaseResult> first_failure;  // smallest failing instance
  bool skipped = false;

  bool passed() const { return failures == 0; }
};

struct Report {
  std::vector<SuiteResult> suites;
  bool passed() const;
};

Report run(const VerifyOptions& options);
/// Per-suite table; output depends only on options (no timings).
void print(std::ostream& out, const Report& report);

}  // namespace caa::verify
