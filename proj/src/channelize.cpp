#include "caa/channelize.hpp"

#include <cmath>

#include "caa/ops.hpp"

namespace caa {

const char* gate_stage_name(GateStage stage) {
  switch (stage) {
    case GateStage::Column: return "column";
    case GateStage::Row: return "row";
    case GateStage::Self: return "self";
  }
  return "?";
}

namespace {

std::vector<std::pair<std::size_t, std::size_t>> layer_shapes(std::size_t channels,
                                                              std::size_t layer_count,
                                                              std::size_t width) {
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  shapes.emplace_back(channels, width);
  for (std::size_t k = 1; k < layer_count; ++k) shapes.emplace_back(width, width);
  shapes.emplace_back(width, channels);
  return shapes;
}

void require_stage(const GateParams& p, GateStage stage, const char* op) {
  if (p.stage != stage) {
    throw std::invalid_argument(std::string(op) + ": expected a " + gate_stage_name(stage) +
                                " gate, got " + gate_stage_name(p.stage));
  }
}

Tensor ones_like_shape(Shape shape, DType dtype) { return Tensor::full(std::move(shape), 1.0, dtype); }

}  // namespace

GateParams GateParams::random(GateStage stage, std::size_t channels, std::size_t layer_count,
                              std::size_t hidden_width, Activation activation, const Rng& rng,
                              DType dtype, std::string_view name) {
  if (layer_count == 0 || hidden_width == 0 || channels == 0) {
    throw ShapeError("GateParams: layer_count, hidden_width and channels must be positive");
  }
  GateParams p;
  p.stage = stage;
  p.layer_count = layer_count;
  p.hidden_width = hidden_width;
  p.activation = activation;
  std::size_t k = 0;
  for (auto [rows, cols] : layer_shapes(channels, layer_count, hidden_width)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    p.layers.push_back(rng.uniform(std::string(name) + ".w" + std::to_string(k++), {rows, cols},
                                   -bound, bound, dtype));
  }
  return p;
}

GateParams GateParams::zeros(GateStage stage, std::size_t channels, std::size_t layer_count,
                             std::size_t hidden_width, Activation activation, DType dtype) {
  if (layer_count == 0 || hidden_width == 0 || channels == 0) {
    throw ShapeError("GateParams: layer_count, hidden_width and channels must be positive");
  }
  GateParams p;
  p.stage = stage;
  p.layer_count = layer_count;
  p.hidden_width = hidden_width;
  p.activation = activation;
  for (auto [rows, cols] : layer_shapes(channels, layer_count, hidden_width)) {
    p.layers.push_back(Tensor::zeros({rows, cols}, dtype));
  }
  return p;
}

GateParams GateParams::bypassed(GateStage stage) {
  GateParams p;
  p.stage = stage;
  p.bypass = true;
  return p;
}

std::size_t GateParams::channels() const {
  if (layers.empty()) throw ShapeError("GateParams: no layers");
  return layers.front().dim(0);
}

void GateParams::validate() const {
  if (bypass) return;
  if (layer_count == 0 || layers.size() != layer_count + 1) {
    throw ShapeError("GateParams: expected layer_count + 1 = " + std::to_string(layer_count + 1) +
                     " matrices, got " + std::to_string(layers.size()));
  }
  const auto expected = layer_shapes(channels(), layer_count, hidden_width);
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const Shape want{expected[k].first, expected[k].second};
    if (layers[k].shape() != want) {
      throw ShapeError("GateParams: layer " + std::to_string(k) + " must be " + shape_str(want) +
                       ", got " + shape_str(layers[k].shape()));
    }
  }
  if (output_bias.defined() && output_bias.shape() != Shape{channels()}) {
    throw ShapeError("GateParams: output_bias must be " + shape_str({channels()}));
  }
}

Tensor gate_mlp(const Tensor& stat, const GateParams& p) {
  if (p.bypass) return ones_like_shape(stat.shape(), stat.dtype());
  p.validate();
  if (stat.rank() == 0 || stat.shape().back() != p.channels()) {
    throw ShapeError("gate_mlp: statistic " + shape_str(stat.shape()) +
                     " does not end in the gate width " + std::to_string(p.channels()));
  }
  Tensor h = stat;
  for (std::size_t k = 0; k < p.layer_count; ++k) {
    const Tensor z = matmul_last(h, p.layers[k]);
    h = p.activation.kind == Activation::Kind::Relu ? relu(z) : leaky_relu(z, p.activation.slope);
  }
  Tensor logits = matmul_last(h, p.layers.back());
  if (p.output_bias.defined()) logits = add(logits, p.output_bias);
  return sigmoid(logits);
}

// ---------------------------------------------------------------------------

namespace detail {

Tensor channelized_beta(const Tensor& a_col_rows, const Tensor& a_row_rows, const Tensor& values,
                        const GateParams& column, std::size_t H, std::size_t W,
                        Tensor* column_gate_out) {
  Tensor aggregate = aggregate_columns(a_col_rows, values);
  if (!column.bypass) {
    const Shape& s = aggregate.shape();  // [R, W, W, Cv]
    const Tensor stat =
        scale(reduce(aggregate, {1}, ReduceMode::Sum), 1.0 / static_cast<double>(H * W));
    const Tensor gate = gate_mlp(stat, column);  // [R, W(n), Cv]
    if (column_gate_out != nullptr) *column_gate_out = gate;
    aggregate = mul(aggregate, reshape(gate, {s[0], 1, s[2], s[3]}));
  } else if (column_gate_out != nullptr) {
    *column_gate_out = ones_like_shape({a_col_rows.dim(0), W, values.dim(0)}, values.dtype());
  }
  return weight_rows(aggregate, a_row_rows);
}

Tensor row_partial(const Tensor& beta) { return reduce(beta, {2}, ReduceMode::Sum); }

Tensor row_gate_values(const std::vector<Tensor>& partials, const GateParams& row, std::size_t H,
                       std::size_t W) {
  const Tensor all_rows = concat(partials, 0);
  if (all_rows.dim(0) != H) {
    throw ShapeError("row gate statistic needs " + std::to_string(H) + " rows, got " +
                     std::to_string(all_rows.dim(0)));
  }
  if (row.bypass) return ones_like_shape({W, all_rows.dim(2)}, all_rows.dtype());
  const Tensor stat =
      scale(reduce(all_rows, {0}, ReduceMode::Sum), 1.0 / static_cast<double>(H * W));
  return gate_mlp(stat, row);
}

Tensor gated_row_sum(const Tensor& beta, const Tensor& row_gate, const GateParams& row) {
  if (row.bypass) return row_partial(beta);
  const Shape& g = row_gate.shape();  // [W, Cv]
  return row_partial(mul(beta, reshape(row_gate, {1, g[0], 1, g[1]})));
}

}  // namespace detail

GateField column_gate(const Breakdown& parts, const Tensor& x, const GateParams& p) {
  require_stage(p, GateStage::Column, "column_gate");
  if (x.rank() != 3) throw ShapeError("column_gate: input must be [C, H, W]");
  const std::size_t H = x.dim(1), W = x.dim(2);
  const Shape& s = parts.alpha_sum.shape();
  if (s.size() != 4 || s[0] != H || s[1] != W || s[2] != W) {
    throw ShapeError("column_gate: alpha_sum " + shape_str(s) + " does not match input");
  }
  GateField field;
  field.stage = GateStage::Column;
  if (p.bypass) {
    field.values = ones_like_shape({H, W, s[3]}, parts.alpha_sum.dtype());
    return field;
  }
  const Tensor stat =
      scale(reduce(parts.alpha_sum, {1}, ReduceMode::Sum), 1.0 / static_cast<double>(H * W));
  field.values = gate_mlp(stat, p);
  return field;
}

GateField row_gate(const Tensor& gated_beta, const GateParams& p) {
  require_stage(p, GateStage::Row, "row_gate");
  if (gated_beta.rank() != 4) throw ShapeError("row_gate: beta must be [H, W, W, Cv]");
  const std::size_t H = gated_beta.dim(0), W = gated_beta.dim(1);
  GateField field;
  field.stage = GateStage::Row;
  field.values = detail::row_gate_values({detail::row_partial(gated_beta)}, p, H, W);
  return field;
}

Tensor caa_forward(const Tensor& x, const AttnParams& p, const GateParams& column,
                   const GateParams& row) {
  require_stage(column, GateStage::Column, "caa_forward");
  require_stage(row, GateStage::Row, "caa_forward");
  const auto& d = p.dims;
  const AttentionMaps maps = attention_maps(x, p);
  const Tensor values = project(x, p.g);
  const Tensor beta =
      detail::channelized_beta(maps.a_col, maps.a_row, values, column, d.H, d.W);
  const Tensor gate = detail::row_gate_values({detail::row_partial(beta)}, row, d.H, d.W);
  return detail::to_channel_first(detail::gated_row_sum(beta, gate, row));
}

Tensor channelized_self_attention(const Tensor& x, const AttnParams& p, const GateParams& gate) {
  require_stage(gate, GateStage::Self, "channelized_self_attention");
  p.check_input(x);
  const auto& d = p.dims;
  const Tensor weights = detail::self_attention_weights(x, p);
  const Tensor aggregate = detail::self_attention_sum(weights, project(x, p.g));  // [H, W, Cv]
  if (gate.bypass) return detail::to_channel_first(aggregate);
  const Tensor stat = scale(aggregate, 1.0 / static_cast<double>(d.H * d.W));
  return detail::to_channel_first(mul(aggregate, gate_mlp(stat, gate)));
}

// ---------------------------------------------------------------------------

SeParams SeParams::random(std::size_t channels, std::size_t reduced, const Rng& rng, DType dtype,
                          std::string_view name) {
  SeParams se;
  const double b1 = 1.0 / std::sqrt(static_cast<double>(channels));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(reduced));
  se.w1 = rng.uniform(std::string(name) + ".w1", {channels, reduced}, -b1, b1, dtype);
  se.w2 = rng.uniform(std::string(name) + ".w2", {reduced, channels}, -b2, b2, dtype);
  return se;
}

SeParams SeParams::zeros(std::size_t channels, std::size_t reduced, DType dtype) {
  return {Tensor::zeros({channels, reduced}, dtype), Tensor::zeros({reduced, channels}, dtype)};
}

Tensor se_block(const Tensor& x, const SeParams& se) {
  if (x.rank() != 3) throw ShapeError("se_block: input must be [C, H, W]");
  if (se.bypass) return x;
  const std::size_t C = x.dim(0);
  if (se.w1.rank() != 2 || se.w2.rank() != 2 || se.w1.dim(0) != C || se.w2.dim(1) != C ||
      se.w1.dim(1) != se.w2.dim(0)) {
    throw ShapeError("se_block: weights " + shape_str(se.w1.shape()) + " / " +
                     shape_str(se.w2.shape()) + " do not fit " + std::to_string(C) + " channels");
  }
  const Tensor pooled = reduce(x, {1, 2}, ReduceMode::Mean);
  const Tensor hidden = relu(contract(pooled, se.w1, "c,cr->r"));
  const Tensor gate = sigmoid(contract(hidden, se.w2, "r,rc->c"));
  return mul(x, reshape(gate, {C, 1, 1}));
}

Tensor dual_parallel(const Tensor& x, const AttnParams& p, const SeParams& se) {
  if (p.dims.Cv != p.dims.C) {
    throw ShapeError("dual_parallel: branches need Cv == C (Cv=" + std::to_string(p.dims.Cv) +
                     ", C=" + std::to_string(p.dims.C) + ")");
  }
  return add(axial_attention(x, p), se_block(x, se));
}

Tensor dual_sequential(const Tensor& x, const AttnParams& p, const SeParams& se, SeOrder order) {
  if (order == SeOrder::AfterAxial) return se_block(axial_attention(x, p), se);
  return axial_attention(se_block(x, se), p);
}

}  // namespace caa
