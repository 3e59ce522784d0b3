#pragma once

#include <string_view>
#include <vector>

#include "caa/attention.hpp"

namespace caa {

enum class GateStage { Column, Row, Self };
const char* gate_stage_name(GateStage stage);

struct Activation {
  enum class Kind { Relu, LeakyRelu };
  Kind kind = Kind::LeakyRelu;
  double slope = 0.01;

  static Activation relu() { return {Kind::Relu, 0.0}; }
  static Activation leaky(double slope = 0.01) { return {Kind::LeakyRelu, slope}; }
};

/// Channel-attention MLP: `layer_count` hidden layers of `hidden_width`, each
/// followed by `activation`, then an output projection back to Cv followed by
/// a sigmoid. `layers` holds layer_count + 1 matrices: Cv x w, (w x w)...,
/// w x Cv. With layer_count = 1 this is the two-matrix SE form.
struct GateParams {
  GateStage stage = GateStage::Column;
  std::vector<Tensor> layers;
  std::size_t layer_count = 0;
  std::size_t hidden_width = 0;
  Activation activation;
  /// Optional [Cv] bias on the output logits; absent by default.
  Tensor output_bias;
  /// Gate is identically 1 (multiplication skipped).
  bool bypass = false;

  /// Weights uniform in +-1/sqrt(fan_in), one substream per layer.
  static GateParams random(GateStage stage, std::size_t channels, std::size_t layer_count,
                           std::size_t hidden_width, Activation activation, const Rng& rng,
                           DType dtype = DType::Float64, std::string_view name = "gate");
  static GateParams zeros(GateStage stage, std::size_t channels, std::size_t layer_count,
                          std::size_t hidden_width, Activation activation = {},
                          DType dtype = DType::Float64);
  static GateParams bypassed(GateStage stage);

  std::size_t channels() const;
  void validate() const;
};

/// Gate values for one stage, strictly within (0, 1).
///   column: [H, W, Cv] indexed (i, n, c)
///   row:    [W, Cv]    indexed (j, c)
///   self:   [H, W, Cv] indexed (i, j, c)
struct GateField {
  GateStage stage = GateStage::Column;
  Tensor values;
};

Tensor gate_mlp(const Tensor& stat, const GateParams& p);

/// stat(i, n, c) = sum_j alpha_sum[i, j, n, c] / (H W), which is the mean of
/// alpha over (m, j).
GateField column_gate(const Breakdown& parts, const Tensor& x, const GateParams& p);

/// stat(j, c) = sum over (i, n) of the column-gated beta, divided by H W.
GateField row_gate(const Tensor& gated_beta, const GateParams& p);

/// Channelized axial attention. Returns [Cv, H, W].
Tensor caa_forward(const Tensor& x, const AttnParams& p, const GateParams& column,
                   const GateParams& row);

/// Self-attention with a per-pixel channel gate on the aggregated features.
Tensor channelized_self_attention(const Tensor& x, const AttnParams& p, const GateParams& gate);

/// Squeeze-and-excitation: y = x * sigmoid(relu(mean_hw(x) w1) w2).
struct SeParams {
  Tensor w1;  // [C, r]
  Tensor w2;  // [r, C]
  bool bypass = false;

  static SeParams random(std::size_t channels, std::size_t reduced, const Rng& rng,
                         DType dtype = DType::Float64, std::string_view name = "se");
  static SeParams zeros(std::size_t channels, std::size_t reduced, DType dtype = DType::Float64);
};

Tensor se_block(const Tensor& x, const SeParams& se);

/// axial_attention(x) + se_block(x); requires Cv == C.
Tensor dual_parallel(const Tensor& x, const AttnParams& p, const SeParams& se);

enum class SeOrder { AfterAxial, BeforeAxial };

/// Sequential dual attention. The default applies SE to the axial output.
Tensor dual_sequential(const Tensor& x, const AttnParams& p, const SeParams& se,
                       SeOrder order = SeOrder::AfterAxial);

namespace detail {

// Row-blocked steps of the channelized kernel, shared with the grouped
// executor. `a_col_rows` [R, H, W] and `a_row_rows` [R, W, W] hold R query
// rows; H and W are the full spatial size used by the gate means.

/// Column-gated beta for the block: [R, W, W, Cv].
Tensor channelized_beta(const Tensor& a_col_rows, const Tensor& a_row_rows, const Tensor& values,
                        const GateParams& column, std::size_t H, std::size_t W,
                        Tensor* column_gate_out = nullptr);
/// sum_n beta: [R, W, Cv].
Tensor row_partial(const Tensor& beta);
/// Row gate [W, Cv] from the per-row partials of all H real rows, in row order.
Tensor row_gate_values(const std::vector<Tensor>& partials, const GateParams& row, std::size_t H,
                       std::size_t W);
/// sum_n gate_row(j) * beta(i, j, n): [R, W, Cv].
Tensor gated_row_sum(const Tensor& beta, const Tensor& row_gate, const GateParams& row);

}  // namespace detail

}  // namespace caa
