#pragma once

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "caa/channelize.hpp"

namespace caa {

/// Inputs to the peak-memory prediction of the grouped executor.
struct PeakModel {
  AttnDims dims;
  std::size_t gate_width = 1;  // widest hidden layer of either gate MLP
};

/// Row-group layout for grouped execution over the query-row axis.
struct GroupPlan {
  std::size_t groups = 1;
  std::size_t rows = 0;     // original row count h
  std::size_t padding = 0;  // (groups - h mod groups) mod groups
  std::size_t rows_per_group = 0;
  std::vector<std::pair<std::size_t, std::size_t>> ranges;  // half-open, over padded rows
  /// Upper bound on live intermediate elements per sample; 0 if no model.
  std::uint64_t predicted_peak_elements = 0;

  std::size_t padded_rows() const { return rows + padding; }
};

GroupPlan plan(std::size_t h, std::size_t groups);
GroupPlan plan(const PeakModel& model, std::size_t groups);
/// Smallest group count whose predicted peak fits `budget_bytes`; throws
/// CapacityError if even one row per group does not fit.
GroupPlan plan_for_budget(const PeakModel& model, std::uint64_t budget_bytes, DType dtype);

/// Predicted peak = rows_per_group * per_row_elements + fixed_elements.
std::uint64_t per_row_elements(const PeakModel& model);
std::uint64_t fixed_elements(const PeakModel& model);

struct ExecStats {
  std::size_t groups = 1;
  std::size_t padding = 0;
  std::int64_t peak_intermediate_elements = 0;
  double wall_time_s = 0.0;
  std::size_t groups_executed = 0;
  std::size_t repeats = 0;
};

/// Channelized axial attention over x [N, C, H, W] executed in row groups.
///
/// Phase 1 streams the groups to collect the per-row partial sums that feed
/// the row-gate statistic (a mean over all rows, so it spans groups); phase 2
/// streams them again to apply both gates and reduce. Padded query rows carry
/// zero attention weights, are excluded from the row statistic and are
/// dropped from the output. Every group evaluates the same per-row sequence
/// of operations, so the result is bit-identical for every plan.
Tensor grouped_caa(const Tensor& x, const AttnParams& p, const GateParams& column,
                   const GateParams& row, const GroupPlan& plan, ExecStats* stats = nullptr);

/// One ExecStats per entry of `group_counts`; wall time is the minimum over
/// `repeats` runs.
std::vector<ExecStats> measure(const Tensor& x, const AttnParams& p, const GateParams& column,
                               const GateParams& row, const std::vector<std::size_t>& group_counts,
                               std::size_t repeats = 5);

inline constexpr const char* kBenchCsvVersion = "# caa-bench v1";
void write_bench_header(std::ostream& out);
void write_bench_row(std::ostream& out, const ExecStats& s, const AttnDims& dims);

}  // namespace caa
