#pragma once

#include "caa/channelize.hpp"

// Loop-based float64 reference implementations evaluated straight from the
// defining sums. Nothing here calls the tensor ops; tensors are only used to
// carry inputs and results.
namespace caa::oracle {

struct OracleCaps {
  std::size_t max_rank5_elements = std::size_t{1} << 22;
  /// Defaults, overridden by the CAA_ORACLE_CAP environment variable.
  static OracleCaps from_env();
};

Tensor self_attention(const Tensor& x, const AttnParams& p, const OracleCaps& caps = {});
AttentionMaps attention_maps(const Tensor& x, const AttnParams& p);
Tensor axial_attention(const Tensor& x, const AttnParams& p);

/// Every intermediate of the literal channelized evaluation.
struct CaaTrace {
  Tensor alpha_full;   // [H, W, H, W, Cv]  (i, j, m, n, c)
  Tensor alpha_sum;    // [H, W, W, Cv]     sum over m of ungated alpha
  Tensor column_stat;  // [H, W, Cv]        (i, n, c)
  Tensor column_gate;  // [H, W, Cv]
  Tensor beta;         // [H, W, W, Cv]     row-weighted, column-gated features
  Tensor row_stat;     // [W, Cv]
  Tensor row_gate;     // [W, Cv]
  Tensor output;       // [Cv, H, W]
};

CaaTrace caa_trace(const Tensor& x, const AttnParams& p, const GateParams& column,
                   const GateParams& row, const OracleCaps& caps = {});
Tensor caa(const Tensor& x, const AttnParams& p, const GateParams& column, const GateParams& row,
           const OracleCaps& caps = {});

/// Gates every alpha(i, j, m, n) entry explicitly before summing over (m, n).
Tensor channelized_self_attention(const Tensor& x, const AttnParams& p, const GateParams& gate,
                                  const OracleCaps& caps = {});

/// Applies the gate MLP to every trailing-axis vector of `stat`.
Tensor gate_mlp(const Tensor& stat, const GateParams& p);

Tensor se_block(const Tensor& x, const SeParams& se);

/// out[d, h, w] = sum_c m[c, d] x[c, h, w]
Tensor project(const Tensor& x, const Tensor& m);

}  // namespace caa::oracle
