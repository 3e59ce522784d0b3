#include "caa/groupexec.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <limits>
#include <ostream>

#include "caa/memory.hpp"
#include "caa/ops.hpp"

namespace caa {

GroupPlan plan(std::size_t h, std::size_t groups) {
  if (h == 0) throw ShapeError("plan: row count must be positive");
  if (groups == 0) throw ShapeError("plan: group count must be positive");
  GroupPlan out;
  out.groups = groups;
  out.rows = h;
  out.padding = (groups - h % groups) % groups;
  out.rows_per_group = (h + out.padding) / groups;
  for (std::size_t g = 0; g < groups; ++g) {
    out.ranges.emplace_back(g * out.rows_per_group, (g + 1) * out.rows_per_group);
  }
  return out;
}

// Live-buffer accounting of one group step (R rows, hidden width w):
//   row slices of both maps           R (H W + W^2), zero-padded in the last group
//   column aggregate + gated copy     2 R W^2 Cv   (the dominant pair; the
//   gated copy + beta, beta + row-gated product hold the same amount)
//   gate statistic, gate, partial     2 R W Cv
//   MLP transients while one aggregate is live: R W (2 Cv + 3 max(w, Cv))
std::uint64_t per_row_elements(const PeakModel& model) {
  const std::uint64_t H = model.dims.H, W = model.dims.W, Cv = model.dims.Cv;
  const std::uint64_t wide = std::max<std::uint64_t>(model.gate_width, Cv);
  const std::uint64_t pair_phase = 2 * W * W * Cv + 2 * W * Cv;
  const std::uint64_t mlp_phase = W * W * Cv + W * (2 * Cv + 3 * wide);
  return std::max(pair_phase, mlp_phase) + H * W + W * W;
}

// Buffers whose size does not depend on the group count: both attention maps,
// projections, per-row partials and outputs, the row gate MLP, the output
// transpose and a per-sample input copy.
std::uint64_t fixed_elements(const PeakModel& model) {
  const std::uint64_t H = model.dims.H, W = model.dims.W, C = model.dims.C;
  const std::uint64_t Cq = model.dims.Cq, Cv = model.dims.Cv;
  const std::uint64_t wide = std::max<std::uint64_t>(model.gate_width, Cv);
  const std::uint64_t maps = H * (H * W + W * W);
  const std::uint64_t map_build = Cq * H * W + H * H * W + H * W * W;
  const std::uint64_t row_stage = 3 * H * W * Cv + W * (2 * Cv + 3 * wide);
  return maps + map_build + C * H * W + Cv * H * W + row_stage;
}

GroupPlan plan(const PeakModel& model, std::size_t groups) {
  GroupPlan out = plan(model.dims.H, groups);
  out.predicted_peak_elements =
      out.rows_per_group * per_row_elements(model) + fixed_elements(model);
  return out;
}

GroupPlan plan_for_budget(const PeakModel& model, std::uint64_t budget_bytes, DType dtype) {
  const std::uint64_t elem = dtype_size(dtype);
  for (std::size_t g = 1; g <= model.dims.H; ++g) {
    GroupPlan candidate = plan(model, g);
    if (candidate.predicted_peak_elements * elem <= budget_bytes) return candidate;
  }
  const GroupPlan finest = plan(model, model.dims.H);
  throw CapacityError("memory budget of " + std::to_string(budget_bytes) +
                      " bytes is infeasible: one row per group needs " +
                      std::to_string(finest.predicted_peak_elements * elem) + " bytes");
}

namespace {

Tensor run_sample(const Tensor& x, const AttnParams& p, const GateParams& column,
                  const GateParams& row, const GroupPlan& gp) {
  const auto& d = p.dims;
  const std::size_t H = d.H, W = d.W;

  const AttentionMaps maps = attention_maps(x, p);
  const Tensor values = project(x, p.g);

  // Rows [lo, hi) of a map; rows past H are zero padding.
  auto group_rows = [H](const Tensor& map, std::size_t lo, std::size_t hi) {
    const std::size_t end = std::min(hi, H);
    const Tensor rows = slice_axis(map, 0, lo, end);
    return end == hi ? rows : pad_axis(rows, 0, hi - end, 0.0);
  };
  auto group_beta = [&](std::size_t lo, std::size_t hi) {
    const Tensor col_rows = group_rows(maps.a_col, lo, hi);
    const Tensor row_rows = group_rows(maps.a_row, lo, hi);
    return detail::channelized_beta(col_rows, row_rows, values, column, H, W);
  };
  // Keeps only the rows of a group result that map to real input rows.
  auto real_rows = [H](const Tensor& t, std::size_t lo, std::size_t hi) {
    const std::size_t end = std::min(hi, H);
    return end - lo == hi - lo ? t : slice_axis(t, 0, 0, end - lo);
  };

  Tensor gate;
  {
    std::vector<Tensor> partials;
    for (const auto& [lo, hi] : gp.ranges) {
      if (lo >= H) continue;  // padding only
      partials.push_back(real_rows(detail::row_partial(group_beta(lo, hi)), lo, hi));
    }
    gate = detail::row_gate_values(partials, row, H, W);
  }

  std::vector<Tensor> outputs;
  for (const auto& [lo, hi] : gp.ranges) {
    if (lo >= H) continue;
    outputs.push_back(real_rows(detail::gated_row_sum(group_beta(lo, hi), gate, row), lo, hi));
  }
  const Tensor hwc = concat(outputs, 0);
  outputs.clear();
  return detail::to_channel_first(hwc);
}

}  // namespace

Tensor grouped_caa(const Tensor& x, const AttnParams& p, const GateParams& column,
                   const GateParams& row, const GroupPlan& gp, ExecStats* stats) {
  p.validate();
  const auto& d = p.dims;
  if (x.rank() != 4 || x.dim(1) != d.C || x.dim(2) != d.H || x.dim(3) != d.W) {
    throw ShapeError("grouped_caa: input must be [N, " + std::to_string(d.C) + ", " +
                     std::to_string(d.H) + ", " + std::to_string(d.W) + "], got " +
                     shape_str(x.shape()));
  }
  if (gp.rows != d.H || gp.ranges.size() != gp.groups ||
      gp.rows_per_group * gp.groups != gp.padded_rows()) {
    throw ShapeError("grouped_caa: plan for " + std::to_string(gp.rows) +
                     " rows does not match input height " + std::to_string(d.H));
  }
  if (column.stage != GateStage::Column || row.stage != GateStage::Row) {
    throw std::invalid_argument("grouped_caa: expected column and row gates");
  }

  memory::PeakProbe probe;
  const auto start = std::chrono::steady_clock::now();
  const std::size_t N = x.dim(0);
  std::vector<Tensor> samples;
  for (std::size_t s = 0; s < N; ++s) {
    const Tensor xs = N == 1 ? reshape(x, {d.C, d.H, d.W})
                             : reshape(slice_axis(x, 0, s, s + 1), {d.C, d.H, d.W});
    samples.push_back(reshape(run_sample(xs, p, column, row, gp), {1, d.Cv, d.H, d.W}));
  }
  Tensor y = concat(samples, 0);
  const auto stop = std::chrono::steady_clock::now();

  if (stats != nullptr) {
    stats->groups = gp.groups;
    stats->padding = gp.padding;
    stats->peak_intermediate_elements = probe.peak_delta();
    stats->wall_time_s = std::chrono::duration<double>(stop - start).count();
    stats->groups_executed = gp.groups * N;
    stats->repeats = 1;
  }
  return y;
}

std::vector<ExecStats> measure(const Tensor& x, const AttnParams& p, const GateParams& column,
                               const GateParams& row, const std::vector<std::size_t>& group_counts,
                               std::size_t repeats) {
  if (group_counts.empty()) throw std::invalid_argument("measure: group list is empty");
  if (repeats == 0) throw std::invalid_argument("measure: repeats must be positive");
  std::vector<ExecStats> out;
  for (std::size_t g : group_counts) {
    const GroupPlan gp = plan(p.dims.H, g);
    ExecStats best;
    best.wall_time_s = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < repeats; ++r) {
      ExecStats run;
      grouped_caa(x, p, column, row, gp, &run);
      best.groups = run.groups;
      best.padding = run.padding;
      best.groups_executed = run.groups_executed;
      best.peak_intermediate_elements =
          std::max(best.peak_intermediate_elements, run.peak_intermediate_elements);
      best.wall_time_s = std::min(best.wall_time_s, run.wall_time_s);
    }
    best.repeats = repeats;
    out.push_back(best);
  }
  return out;
}

void write_bench_header(std::ostream& out) {
  out << kBenchCsvVersion << '\n' << "G,H,W,C,padding,peak_elements,wall_time_s,repeats\n";
}

void write_bench_row(std::ostream& out, const ExecStats& s, const AttnDims& dims) {
  out << s.groups << ',' << dims.H << ',' << dims.W << ',' << dims.C << ',' << s.padding << ','
      << s.peak_intermediate_elements << ',' << std::setprecision(9) << s.wall_time_s << ','
      << s.repeats << '\n';
}

}  // namespace caa
