#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "caa/rng.hpp"
#include "caa/tensor.hpp"

namespace caa {

struct AttnDims {
  std::size_t H = 1;
  std::size_t W = 1;
  std::size_t C = 1;
  std::size_t Cq = 1;  // query/key channels
  std::size_t Cv = 1;  // value channels

  /// Cq = Cv = C.
  static AttnDims square(std::size_t h, std::size_t w, std::size_t c) { return {h, w, c, c, c}; }
};

/// 1x1 projections for the attention kernels (no bias). Query and key share
/// one matrix per stage: `theta` for the column stage and for full
/// self-attention, `phi` for the row stage. `g` produces the values.
struct AttnParams {
  Tensor theta;  // [C, Cq]
  Tensor phi;    // [C, Cq]
  Tensor g;      // [C, Cv]
  AttnDims dims;

  /// Entries uniform in +-1/sqrt(C), one substream per matrix.
  static AttnParams random(const AttnDims& dims, const Rng& rng, DType dtype = DType::Float64,
                           std::string_view prefix = "attn");

  void validate() const;
  /// Throws ShapeError unless x is [C, H, W] for these dims.
  void check_input(const Tensor& x) const;
};

/// a_col[i, m, j]: column attention of query (i, j) over rows m, softmax over m.
/// a_row[i, j, n]: row attention of query (i, j) over columns n, softmax over n.
struct AttentionMaps {
  Tensor a_col;  // [H, H, W]
  Tensor a_row;  // [H, W, W]
};

/// Intermediate weighted features of the axial kernel.
///   alpha_sum[i, j, n, c] = sum_m a_col[i, m, j] * v[c, m, n]
///   beta[i, j, n, c]      = a_row[i, j, n] * alpha_sum[i, j, n, c]
///   alpha_full[i, j, m, n, c] = a_col[i, m, j] * v[c, m, n]   (only on request)
struct Breakdown {
  Tensor alpha_sum;   // [H, W, W, Cv]
  Tensor beta;        // [H, W, W, Cv]
  Tensor alpha_full;  // [H, W, H, W, Cv] or undefined
};

struct BreakdownOptions {
  bool materialize_full = false;
  std::size_t max_full_elements = std::size_t{1} << 22;
};

/// Per-pixel linear map: out[d, h, w] = sum_c m[c, d] x[c, h, w].
Tensor project(const Tensor& x, const Tensor& m);

/// Full 2D self-attention; softmax over all (m, n) positions. Returns [Cv, H, W].
Tensor self_attention(const Tensor& x, const AttnParams& p);

AttentionMaps attention_maps(const Tensor& x, const AttnParams& p);

Breakdown breakdown(const Tensor& x, const AttentionMaps& maps, const AttnParams& p,
                    const BreakdownOptions& options = {});

/// y[c, i, j] = sum_n a_row[i, j, n] * sum_m a_col[i, m, j] * v[c, m, n].
/// Column weights come from the query column j and are applied to the values
/// of every column n. Returns [Cv, H, W].
Tensor axial_attention(const Tensor& x, const AttnParams& p);

// ---------------------------------------------------------------------------
// Analytic cost model. Counts multiply-accumulates (1 MAC = 2 FLOPs).
//
//   self:  map (HW)^2 Cq, apply (HW)^2 Cv, projections HW C (2 Cq + Cv)
//   axial: map HW (H+W) Cq, apply HW (H+W) Cv, projections HW C (2 Cq + Cv)
//   channelized: axial plus two gate stages
//
// A gate stage costs its MLP weight count, Cv w + (L-1) w^2 + w Cv, once per
// stage (`gate_macs`), the way per-layer FLOP counters account for a channel
// attention MLP. The count actually executed by the spatially varying gates
// (H*W column-gate sites and W row-gate sites) is reported separately in
// `gate_macs_all_sites`.

enum class AttentionKind { Self, Axial, Channelized };

struct GateShape {
  std::size_t layer_count = 5;
  std::size_t hidden_width = 128;
};

struct FlopReport {
  AttentionKind kind = AttentionKind::Self;
  AttnDims dims;
  std::uint64_t projection_macs = 0;
  std::uint64_t map_macs = 0;
  std::uint64_t apply_macs = 0;
  std::uint64_t gate_macs = 0;
  std::uint64_t gate_macs_all_sites = 0;

  std::uint64_t attention_core_macs() const { return map_macs + apply_macs; }
  std::uint64_t attention_macs() const { return projection_macs + map_macs + apply_macs; }
  std::uint64_t total_macs() const { return attention_macs() + gate_macs; }
  std::uint64_t total_flops() const { return 2 * total_macs(); }
  /// gate_macs / attention_macs().
  double gate_overhead() const;
};

FlopReport flops(AttentionKind kind, const AttnDims& dims, const GateShape& gate = {});
const char* attention_kind_name(AttentionKind kind);

namespace detail {

// Pieces shared by the axial, channelized and grouped kernels. Row-blocked
// tensors carry a leading block of R query rows.

/// [R, H, W] x [Cv, H, W] -> [R, W, W, Cv]
Tensor aggregate_columns(const Tensor& a_col_rows, const Tensor& values);
/// [R, W, W, Cv] * [R, W, W] -> [R, W, W, Cv]
Tensor weight_rows(const Tensor& column_aggregate, const Tensor& a_row_rows);
/// [H, W, C] -> [C, H, W]
Tensor to_channel_first(const Tensor& hwc);
/// Normalized self-attention weights [H, W, H, W] and their value sum [H, W, Cv].
Tensor self_attention_weights(const Tensor& x, const AttnParams& p);
Tensor self_attention_sum(const Tensor& weights, const Tensor& values);

}  // namespace detail

}  // namespace caa
