#include "caa/oracle.hpp"

#include <cmath>
#include <cstdlib>
#include <string>

namespace caa::oracle {

namespace {

using Vec = std::vector<double>;

struct Dims {
  std::size_t C, H, W, Cq, Cv;
};

Dims dims_of(const Tensor& x, const AttnParams& p) {
  p.check_input(x);
  return {p.dims.C, p.dims.H, p.dims.W, p.dims.Cq, p.dims.Cv};
}

void require_cap(std::size_t n, const OracleCaps& caps, const char* what) {
  if (n > caps.max_rank5_elements) {
    throw CapacityError(std::string("oracle ") + what + " needs " + std::to_string(n) +
                        " elements, cap is " + std::to_string(caps.max_rank5_elements));
  }
}

// x [C, H, W] row-major, m [C, D] -> [D, H, W]
Vec project_raw(const Vec& x, const Vec& m, std::size_t C, std::size_t D, std::size_t HW) {
  Vec out(D * HW, 0.0);
  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t s = 0; s < HW; ++s) {
      double acc = 0.0;
      for (std::size_t c = 0; c < C; ++c) acc += m[c * D + d] * x[c * HW + s];
      out[d * HW + s] = acc;
    }
  }
  return out;
}

// In-place normalization of logits[0..n) with max subtraction.
void softmax_raw(double* logits, std::size_t n) {
  double peak = logits[0];
  for (std::size_t k = 1; k < n; ++k) peak = logits[k] > peak ? logits[k] : peak;
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    logits[k] = std::exp(logits[k] - peak);
    total += logits[k];
  }
  for (std::size_t k = 0; k < n; ++k) logits[k] /= total;
}

double act(double v, const Activation& a) {
  if (v > 0) return v;
  return a.kind == Activation::Kind::Relu ? 0.0 : a.slope * v;
}

// One gate vector: stat[0..Cv) -> gate[0..Cv).
Vec mlp_raw(const Vec& stat, const GateParams& p) {
  const std::size_t Cv = stat.size();
  if (p.bypass) return Vec(Cv, 1.0);
  Vec h = stat;
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    const Tensor& w = p.layers[k];
    const std::size_t rows = w.dim(0), cols = w.dim(1);
    const Vec wv = w.to_doubles();
    Vec z(cols, 0.0);
    for (std::size_t o = 0; o < cols; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < rows; ++i) acc += h[i] * wv[i * cols + o];
      z[o] = acc;
    }
    const bool last = k + 1 == p.layers.size();
    if (!last) {
      for (auto& v : z) v = act(v, p.activation);
    } else {
      const Vec bias = p.output_bias.defined() ? p.output_bias.to_doubles() : Vec(cols, 0.0);
      for (std::size_t o = 0; o < cols; ++o) z[o] = 1.0 / (1.0 + std::exp(-(z[o] + bias[o])));
    }
    h = std::move(z);
  }
  return h;
}

struct RawMaps {
  Vec col;  // [i][m][j]
  Vec row;  // [i][j][n]
};

RawMaps maps_raw(const Vec& x, const AttnParams& p, const Dims& d) {
  const std::size_t HW = d.H * d.W;
  const Vec q = project_raw(x, p.theta.to_doubles(), d.C, d.Cq, HW);
  const Vec k = project_raw(x, p.phi.to_doubles(), d.C, d.Cq, HW);
  RawMaps maps{Vec(d.H * d.H * d.W), Vec(d.H * d.W * d.W)};
  Vec logits;
  for (std::size_t i = 0; i < d.H; ++i) {
    for (std::size_t j = 0; j < d.W; ++j) {
      logits.assign(d.H, 0.0);
      for (std::size_t m = 0; m < d.H; ++m) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d.Cq; ++c) {
          acc += q[(c * d.H + i) * d.W + j] * q[(c * d.H + m) * d.W + j];
        }
        logits[m] = acc;
      }
      softmax_raw(logits.data(), d.H);
      for (std::size_t m = 0; m < d.H; ++m) maps.col[(i * d.H + m) * d.W + j] = logits[m];

      logits.assign(d.W, 0.0);
      for (std::size_t n = 0; n < d.W; ++n) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d.Cq; ++c) {
          acc += k[(c * d.H + i) * d.W + j] * k[(c * d.H + i) * d.W + n];
        }
        logits[n] = acc;
      }
      softmax_raw(logits.data(), d.W);
      for (std::size_t n = 0; n < d.W; ++n) maps.row[(i * d.W + j) * d.W + n] = logits[n];
    }
  }
  return maps;
}

// Self-attention weights f[i][j][m][n].
Vec self_weights_raw(const Vec& x, const AttnParams& p, const Dims& d) {
  const std::size_t HW = d.H * d.W;
  const Vec q = project_raw(x, p.theta.to_doubles(), d.C, d.Cq, HW);
  Vec f(HW * HW);
  for (std::size_t a = 0; a < HW; ++a) {
    double* row = f.data() + a * HW;
    for (std::size_t b = 0; b < HW; ++b) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d.Cq; ++c) acc += q[c * HW + a] * q[c * HW + b];
      row[b] = acc;
    }
    softmax_raw(row, HW);
  }
  return f;
}

}  // namespace

OracleCaps OracleCaps::from_env() {
  OracleCaps caps;
  if (const char* env = std::getenv("CAA_ORACLE_CAP")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0' || v == 0) {
      throw std::invalid_argument(std::string("CAA_ORACLE_CAP must be a positive integer, got '") +
                                  env + "'");
    }
    caps.max_rank5_elements = static_cast<std::size_t>(v);
  }
  return caps;
}

Tensor project(const Tensor& x, const Tensor& m) {
  if (x.rank() != 3 || m.rank() != 2 || x.dim(0) != m.dim(0)) {
    throw ShapeError("oracle project: channel mismatch");
  }
  const std::size_t HW = x.dim(1) * x.dim(2);
  return Tensor::from_values({m.dim(1), x.dim(1), x.dim(2)},
                             project_raw(x.to_doubles(), m.to_doubles(), m.dim(0), m.dim(1), HW));
}

Tensor self_attention(const Tensor& x, const AttnParams& p, const OracleCaps& caps) {
  const Dims d = dims_of(x, p);
  const std::size_t HW = d.H * d.W;
  require_cap(HW * HW * d.Cv, caps, "self-attention");
  const Vec xv = x.to_doubles();
  const Vec f = self_weights_raw(xv, p, d);
  const Vec v = project_raw(xv, p.g.to_doubles(), d.C, d.Cv, HW);
  Vec y(d.Cv * HW, 0.0);
  for (std::size_t i = 0; i < d.H; ++i)
    for (std::size_t j = 0; j < d.W; ++j)
      for (std::size_t c = 0; c < d.Cv; ++c) {
        double acc = 0.0;
        for (std::size_t m = 0; m < d.H; ++m)
          for (std::size_t n = 0; n < d.W; ++n)
            acc += f[(i * d.W + j) * HW + m * d.W + n] * v[(c * d.H + m) * d.W + n];
        y[(c * d.H + i) * d.W + j] = acc;
      }
  return Tensor::from_values({d.Cv, d.H, d.W}, y);
}

AttentionMaps attention_maps(const Tensor& x, const AttnParams& p) {
  const Dims d = dims_of(x, p);
  RawMaps raw = maps_raw(x.to_doubles(), p, d);
  return {Tensor::from_values({d.H, d.H, d.W}, raw.col),
          Tensor::from_values({d.H, d.W, d.W}, raw.row)};
}

Tensor axial_attention(const Tensor& x, const AttnParams& p) {
  const Dims d = dims_of(x, p);
  const Vec xv = x.to_doubles();
  const RawMaps maps = maps_raw(xv, p, d);
  const Vec v = project_raw(xv, p.g.to_doubles(), d.C, d.Cv, d.H * d.W);
  Vec y(d.Cv * d.H * d.W, 0.0);
  for (std::size_t c = 0; c < d.Cv; ++c)
    for (std::size_t i = 0; i < d.H; ++i)
      for (std::size_t j = 0; j < d.W; ++j) {
        double outer = 0.0;
        for (std::size_t n = 0; n < d.W; ++n) {
          double inner = 0.0;
          for (std::size_t m = 0; m < d.H; ++m) {
            inner += maps.col[(i * d.H + m) * d.W + j] * v[(c * d.H + m) * d.W + n];
          }
          outer += maps.row[(i * d.W + j) * d.W + n] * inner;
        }
        y[(c * d.H + i) * d.W + j] = outer;
      }
  return Tensor::from_values({d.Cv, d.H, d.W}, y);
}

CaaTrace caa_trace(const Tensor& x, const AttnParams& p, const GateParams& column,
                   const GateParams& row, const OracleCaps& caps) {
  const Dims d = dims_of(x, p);
  const std::size_t H = d.H, W = d.W, Cv = d.Cv;
  const std::size_t full = H * W * H * W * Cv;
  require_cap(full, caps, "rank-5 alpha");
  const Vec xv = x.to_doubles();
  const RawMaps maps = maps_raw(xv, p, d);
  const Vec v = project_raw(xv, p.g.to_doubles(), d.C, Cv, H * W);
  const double inv_hw = 1.0 / static_cast<double>(H * W);

  auto a5 = [&](std::size_t i, std::size_t j, std::size_t m, std::size_t n, std::size_t c) {
    return (((i * W + j) * H + m) * W + n) * Cv + c;
  };
  auto a4 = [&](std::size_t i, std::size_t j, std::size_t n, std::size_t c) {
    return ((i * W + j) * W + n) * Cv + c;
  };

  // alpha(i, j, m, n) = A_col(x_ij, x_mj) g(x_mn)
  Vec alpha(full);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j)
      for (std::size_t m = 0; m < H; ++m)
        for (std::size_t n = 0; n < W; ++n)
          for (std::size_t c = 0; c < Cv; ++c)
            alpha[a5(i, j, m, n, c)] = maps.col[(i * H + m) * W + j] * v[(c * H + m) * W + n];

  Vec alpha_sum(H * W * W * Cv, 0.0);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j)
      for (std::size_t n = 0; n < W; ++n)
        for (std::size_t c = 0; c < Cv; ++c) {
          double acc = 0.0;
          for (std::size_t m = 0; m < H; ++m) acc += alpha[a5(i, j, m, n, c)];
          alpha_sum[a4(i, j, n, c)] = acc;
        }

  // Column gate: mean of alpha over (m, j), kept over (i, n).
  Vec col_stat(H * W * Cv), col_gate(H * W * Cv);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t n = 0; n < W; ++n) {
      Vec stat(Cv, 0.0);
      for (std::size_t c = 0; c < Cv; ++c) {
        double acc = 0.0;
        for (std::size_t m = 0; m < H; ++m)
          for (std::size_t j = 0; j < W; ++j) acc += alpha[a5(i, j, m, n, c)];
        stat[c] = acc * inv_hw;
      }
      const Vec gate = mlp_raw(stat, column);
      for (std::size_t c = 0; c < Cv; ++c) {
        col_stat[(i * W + n) * Cv + c] = stat[c];
        col_gate[(i * W + n) * Cv + c] = gate[c];
      }
    }

  // beta(i, j, n) = A_row(x_ij, x_in) sum_m C_col(alpha(i, j, m, n))
  Vec beta(H * W * W * Cv);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j)
      for (std::size_t n = 0; n < W; ++n)
        for (std::size_t c = 0; c < Cv; ++c) {
          double acc = 0.0;
          for (std::size_t m = 0; m < H; ++m) {
            acc += col_gate[(i * W + n) * Cv + c] * alpha[a5(i, j, m, n, c)];
          }
          beta[a4(i, j, n, c)] = maps.row[(i * W + j) * W + n] * acc;
        }

  // Row gate: mean of beta over (i, n), kept over j.
  Vec row_stat(W * Cv), row_gate(W * Cv);
  for (std::size_t j = 0; j < W; ++j) {
    Vec stat(Cv, 0.0);
    for (std::size_t c = 0; c < Cv; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t n = 0; n < W; ++n) acc += beta[a4(i, j, n, c)];
      stat[c] = acc * inv_hw;
    }
    const Vec gate = mlp_raw(stat, row);
    for (std::size_t c = 0; c < Cv; ++c) {
      row_stat[j * Cv + c] = stat[c];
      row_gate[j * Cv + c] = gate[c];
    }
  }

  Vec y(Cv * H * W);
  for (std::size_t c = 0; c < Cv; ++c)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        double acc = 0.0;
        for (std::size_t n = 0; n < W; ++n) acc += row_gate[j * Cv + c] * beta[a4(i, j, n, c)];
        y[(c * H + i) * W + j] = acc;
      }

  CaaTrace t;
  t.alpha_full = Tensor::from_values({H, W, H, W, Cv}, alpha);
  t.alpha_sum = Tensor::from_values({H, W, W, Cv}, alpha_sum);
  t.column_stat = Tensor::from_values({H, W, Cv}, col_stat);
  t.column_gate = Tensor::from_values({H, W, Cv}, col_gate);
  t.beta = Tensor::from_values({H, W, W, Cv}, beta);
  t.row_stat = Tensor::from_values({W, Cv}, row_stat);
  t.row_gate = Tensor::from_values({W, Cv}, row_gate);
  t.output = Tensor::from_values({Cv, H, W}, y);
  return t;
}

Tensor caa(const Tensor& x, const AttnParams& p, const GateParams& column, const GateParams& row,
           const OracleCaps& caps) {
  return caa_trace(x, p, column, row, caps).output;
}

Tensor channelized_self_attention(const Tensor& x, const AttnParams& p, const GateParams& gate,
                                  const OracleCaps& caps) {
  const Dims d = dims_of(x, p);
  const std::size_t HW = d.H * d.W;
  require_cap(HW * HW * d.Cv, caps, "rank-4 alpha");
  const Vec xv = x.to_doubles();
  const Vec f = self_weights_raw(xv, p, d);
  const Vec v = project_raw(xv, p.g.to_doubles(), d.C, d.Cv, HW);
  const double inv_hw = 1.0 / static_cast<double>(HW);
  Vec y(d.Cv * HW);
  for (std::size_t a = 0; a < HW; ++a) {
    // alpha(a, b, c) = f(a, b) v(c, b); its (m, n) mean feeds this pixel's gate.
    Vec alpha(HW * d.Cv);
    Vec stat(d.Cv, 0.0);
    for (std::size_t c = 0; c < d.Cv; ++c) {
      double acc = 0.0;
      for (std::size_t b = 0; b < HW; ++b) {
        alpha[b * d.Cv + c] = f[a * HW + b] * v[c * HW + b];
        acc += alpha[b * d.Cv + c];
      }
      stat[c] = acc * inv_hw;
    }
    const Vec g = mlp_raw(stat, gate);
    for (std::size_t c = 0; c < d.Cv; ++c) {
      double acc = 0.0;
      for (std::size_t b = 0; b < HW; ++b) acc += g[c] * alpha[b * d.Cv + c];
      y[c * HW + a] = acc;
    }
  }
  return Tensor::from_values({d.Cv, d.H, d.W}, y);
}

Tensor gate_mlp(const Tensor& stat, const GateParams& p) {
  const std::size_t Cv = stat.shape().back();
  const Vec s = stat.to_doubles();
  Vec out(s.size());
  for (std::size_t base = 0; base < s.size(); base += Cv) {
    const Vec g = mlp_raw(Vec(s.begin() + static_cast<std::ptrdiff_t>(base),
                              s.begin() + static_cast<std::ptrdiff_t>(base + Cv)),
                          p);
    for (std::size_t c = 0; c < Cv; ++c) out[base + c] = g[c];
  }
  return Tensor::from_values(stat.shape(), out);
}

Tensor se_block(const Tensor& x, const SeParams& se) {
  if (x.rank() != 3) throw ShapeError("oracle se_block: input must be [C, H, W]");
  if (se.bypass) return x.astype(DType::Float64);
  const std::size_t C = x.dim(0), HW = x.dim(1) * x.dim(2);
  const std::size_t r = se.w1.dim(1);
  const Vec xv = x.to_doubles(), w1 = se.w1.to_doubles(), w2 = se.w2.to_doubles();
  Vec pooled(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    double acc = 0.0;
    for (std::size_t s = 0; s < HW; ++s) acc += xv[c * HW + s];
    pooled[c] = acc / static_cast<double>(HW);
  }
  Vec hidden(r, 0.0);
  for (std::size_t k = 0; k < r; ++k) {
    double acc = 0.0;
    for (std::size_t c = 0; c < C; ++c) acc += pooled[c] * w1[c * r + k];
    hidden[k] = acc > 0 ? acc : 0.0;
  }
  Vec y(C * HW);
  for (std::size_t c = 0; c < C; ++c) {
    double acc = 0.0;
    for (std::size_t k = 0; k < r; ++k) acc += hidden[k] * w2[k * C + c];
    const double gate = 1.0 / (1.0 + std::exp(-acc));
    for (std::size_t s = 0; s < HW; ++s) y[c * HW + s] = gate * xv[c * HW + s];
  }
  return Tensor::from_values(x.shape(), y);
}

}  // namespace caa::oracle
