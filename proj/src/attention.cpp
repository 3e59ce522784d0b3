#include "caa/attention.hpp"

#include <cmath>

#include "caa/ops.hpp"

namespace caa {

AttnParams AttnParams::random(const AttnDims& dims, const Rng& rng, DType dtype,
                              std::string_view prefix) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(dims.C));
  const std::string p(prefix);
  AttnParams params;
  params.dims = dims;
  params.theta = rng.uniform(p + ".theta", {dims.C, dims.Cq}, -bound, bound, dtype);
  params.phi = rng.uniform(p + ".phi", {dims.C, dims.Cq}, -bound, bound, dtype);
  params.g = rng.uniform(p + ".g", {dims.C, dims.Cv}, -bound, bound, dtype);
  return params;
}

void AttnParams::validate() const {
  auto expect = [](const Tensor& m, std::size_t rows, std::size_t cols, const char* name) {
    if (!m.defined() || m.shape() != Shape{rows, cols}) {
      throw ShapeError(std::string("AttnParams.") + name + " must be " +
                       shape_str({rows, cols}) + ", got " +
                       (m.defined() ? shape_str(m.shape()) : std::string("undefined")));
    }
  };
  if (dims.H == 0 || dims.W == 0 || dims.C == 0 || dims.Cq == 0 || dims.Cv == 0) {
    throw ShapeError("AttnParams: all dims must be positive");
  }
  expect(theta, dims.C, dims.Cq, "theta");
  expect(phi, dims.C, dims.Cq, "phi");
  expect(g, dims.C, dims.Cv, "g");
}

void AttnParams::check_input(const Tensor& x) const {
  validate();
  if (x.shape() != Shape{dims.C, dims.H, dims.W}) {
    throw ShapeError("attention input must be " + shape_str({dims.C, dims.H, dims.W}) + ", got " +
                     shape_str(x.shape()));
  }
}

Tensor project(const Tensor& x, const Tensor& m) {
  if (x.rank() != 3 || m.rank() != 2 || x.dim(0) != m.dim(0)) {
    throw ShapeError("project: channel mismatch between input " + shape_str(x.shape()) +
                     " and matrix " + shape_str(m.shape()));
  }
  return contract(x, m, "chw,cd->dhw");
}

namespace detail {

Tensor aggregate_columns(const Tensor& a_col_rows, const Tensor& values) {
  return contract(a_col_rows, values, "imj,cmn->ijnc");
}

Tensor weight_rows(const Tensor& column_aggregate, const Tensor& a_row_rows) {
  const Shape& s = a_row_rows.shape();
  return mul(column_aggregate, reshape(a_row_rows, {s[0], s[1], s[2], 1}));
}

Tensor to_channel_first(const Tensor& hwc) { return transpose(hwc, {2, 0, 1}); }

Tensor self_attention_weights(const Tensor& x, const AttnParams& p) {
  const auto& d = p.dims;
  const Tensor q = project(x, p.theta);
  const Tensor logits = contract(q, q, "cij,cmn->ijmn");
  const Tensor weights = softmax(reshape(logits, {d.H, d.W, d.H * d.W}), 2);
  return reshape(weights, {d.H, d.W, d.H, d.W});
}

Tensor self_attention_sum(const Tensor& weights, const Tensor& values) {
  return contract(weights, values, "ijmn,cmn->ijc");
}

}  // namespace detail

Tensor self_attention(const Tensor& x, const AttnParams& p) {
  p.check_input(x);
  const Tensor weights = detail::self_attention_weights(x, p);
  const Tensor values = project(x, p.g);
  return detail::to_channel_first(detail::self_attention_sum(weights, values));
}

AttentionMaps attention_maps(const Tensor& x, const AttnParams& p) {
  p.check_input(x);
  AttentionMaps maps;
  {
    const Tensor q = project(x, p.theta);
    maps.a_col = softmax(contract(q, q, "cij,cmj->imj"), 1);
  }
  {
    const Tensor k = project(x, p.phi);
    maps.a_row = softmax(contract(k, k, "cij,cin->ijn"), 2);
  }
  return maps;
}

Breakdown breakdown(const Tensor& x, const AttentionMaps& maps, const AttnParams& p,
                    const BreakdownOptions& options) {
  p.check_input(x);
  const auto& d = p.dims;
  if (maps.a_col.shape() != Shape{d.H, d.H, d.W} || maps.a_row.shape() != Shape{d.H, d.W, d.W}) {
    throw ShapeError("breakdown: attention maps do not match input dims");
  }
  const Tensor values = project(x, p.g);
  Breakdown out;
  out.alpha_sum = detail::aggregate_columns(maps.a_col, values);
  out.beta = detail::weight_rows(out.alpha_sum, maps.a_row);
  if (options.materialize_full) {
    const std::size_t n = d.H * d.W * d.H * d.W * d.Cv;
    if (n > options.max_full_elements) {
      throw CapacityError("breakdown: alpha_full needs " + std::to_string(n) +
                          " elements, cap is " + std::to_string(options.max_full_elements));
    }
    out.alpha_full = contract(maps.a_col, values, "imj,cmn->ijmnc");
  }
  return out;
}

Tensor axial_attention(const Tensor& x, const AttnParams& p) {
  const Breakdown parts = breakdown(x, attention_maps(x, p), p);
  return detail::to_channel_first(reduce(parts.beta, {2}, ReduceMode::Sum));
}

// ---------------------------------------------------------------------------

const char* attention_kind_name(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::Self: return "self";
    case AttentionKind::Axial: return "axial";
    case AttentionKind::Channelized: return "channelized";
  }
  return "?";
}

double FlopReport::gate_overhead() const {
  const auto denom = attention_macs();
  return denom == 0 ? 0.0 : static_cast<double>(gate_macs) / static_cast<double>(denom);
}

FlopReport flops(AttentionKind kind, const AttnDims& dims, const GateShape& gate) {
  if (dims.H == 0 || dims.W == 0 || dims.C == 0 || dims.Cq == 0 || dims.Cv == 0) {
    throw ShapeError("flops: dims must be positive");
  }
  const std::uint64_t H = dims.H, W = dims.W, C = dims.C, Cq = dims.Cq, Cv = dims.Cv;
  const std::uint64_t pixels = H * W;
  FlopReport r;
  r.kind = kind;
  r.dims = dims;
  if (kind == AttentionKind::Self) {
    r.projection_macs = pixels * C * (2 * Cq + Cv);
    r.map_macs = pixels * pixels * Cq;
    r.apply_macs = pixels * pixels * Cv;
    return r;
  }
  r.projection_macs = pixels * C * (2 * Cq + Cv);
  r.map_macs = pixels * (H + W) * Cq;
  r.apply_macs = pixels * (H + W) * Cv;
  if (kind == AttentionKind::Channelized) {
    const std::uint64_t L = gate.layer_count, w = gate.hidden_width;
    const std::uint64_t per_stage = Cv * w + (L > 0 ? L - 1 : 0) * w * w + w * Cv;
    r.gate_macs = 2 * per_stage;
    r.gate_macs_all_sites = per_stage * (H * W + W);
  }
  return r;
}

}  // namespace caa
