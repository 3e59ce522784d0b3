#include "caa/ops.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <numeric>

#include "caa/autodiff.hpp"

namespace caa {

namespace {

using detail::record;

std::vector<std::size_t> row_major_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t k = shape.size(); k-- > 1;) strides[k - 1] = strides[k] * shape[k];
  return strides;
}

void require_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype()) {
    throw DTypeError(std::string(op) + ": dtype mismatch (" + dtype_name(a.dtype()) + " vs " +
                     dtype_name(b.dtype()) + ")");
  }
}

// Offsets of every index of `dims` (row-major, ascending) under `strides`.
std::vector<std::size_t> offset_table(const std::vector<std::size_t>& dims,
                                      const std::vector<std::size_t>& strides) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  std::vector<std::size_t> out(n, 0);
  std::vector<std::size_t> idx(dims.size(), 0);
  std::size_t off = 0;
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = off;
    for (std::size_t d = dims.size(); d-- > 0;) {
      ++idx[d];
      off += strides[d];
      if (idx[d] < dims[d]) break;
      off -= strides[d] * dims[d];
      idx[d] = 0;
    }
  }
  return out;
}

// Walks a row-major index space of `dims`, keeping two strided offsets.
struct DualOdometer {
  std::vector<std::size_t> dims, sa, sb, idx;
  std::size_t a = 0, b = 0;

  DualOdometer(std::vector<std::size_t> d, std::vector<std::size_t> stride_a,
               std::vector<std::size_t> stride_b)
      : dims(std::move(d)), sa(std::move(stride_a)), sb(std::move(stride_b)), idx(dims.size(), 0) {}

  void next() {
    for (std::size_t d = dims.size(); d-- > 0;) {
      ++idx[d];
      a += sa[d];
      b += sb[d];
      if (idx[d] < dims[d]) return;
      a -= sa[d] * dims[d];
      b -= sb[d] * dims[d];
      idx[d] = 0;
    }
  }
};

// ---------------------------------------------------------------------------
// Unary elementwise

template <typename Fn>
Tensor map_unary(const Tensor& t, Fn fn) {
  return std::visit(
      [&](const auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        std::vector<T> out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = fn(v[i]);
        return TensorAccess::make(t.shape(), std::move(out));
      },
      TensorAccess::storage(t));
}

// ---------------------------------------------------------------------------
// Broadcasting binary ops

std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  const auto base = row_major_strides(in);
  std::vector<std::size_t> strides(out.size(), 0);
  const std::size_t lead = out.size() - in.size();
  for (std::size_t k = 0; k < in.size(); ++k) {
    strides[lead + k] = in[k] == 1 ? 0 : base[k];
  }
  return strides;
}

template <typename Fn>
Tensor map_binary(const Tensor& a, const Tensor& b, const char* op, Fn fn) {
  require_same_dtype(a, b, op);
  Shape out_shape = broadcast_shape(a.shape(), b.shape());
  return std::visit(
      [&](const auto& va) {
        using V = std::decay_t<decltype(va)>;
        using T = typename V::value_type;
        const auto& vb = std::get<V>(TensorAccess::storage(b));
        const std::size_t n = shape_numel(out_shape);
        std::vector<T> out(n);
        if (a.shape() == b.shape()) {
          for (std::size_t i = 0; i < n; ++i) out[i] = fn(va[i], vb[i]);
        } else {
          DualOdometer it(out_shape, broadcast_strides(a.shape(), out_shape),
                          broadcast_strides(b.shape(), out_shape));
          for (std::size_t i = 0; i < n; ++i, it.next()) out[i] = fn(va[it.a], vb[it.b]);
        }
        return TensorAccess::make(out_shape, std::move(out));
      },
      TensorAccess::storage(a));
}

// Sums `g` down to `target` (inverse of trailing-axis broadcast).
Tensor unbroadcast(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  const std::size_t lead = g.rank() - target.size();
  std::vector<std::size_t> axes;
  for (std::size_t k = 0; k < g.rank(); ++k) {
    if (k < lead || (target[k - lead] == 1 && g.shape()[k] != 1)) axes.push_back(k);
  }
  Tensor r = axes.empty() ? g : reduce(g, axes, ReduceMode::Sum);
  return reshape(r, target);
}

// ---------------------------------------------------------------------------
// Contraction

struct ContractPlan {
  std::string la, lb, lo;
  std::vector<char> sum_labels;
  std::array<std::size_t, 128> size{};
};

ContractPlan parse_contract(const Tensor& a, const Tensor& b, std::string_view spec) {
  ContractPlan plan;
  const auto comma = spec.find(',');
  const auto arrow = spec.find("->");
  if (comma == std::string_view::npos || arrow == std::string_view::npos || arrow < comma) {
    throw ShapeError("contract: malformed spec '" + std::string(spec) + "'");
  }
  plan.la = std::string(spec.substr(0, comma));
  plan.lb = std::string(spec.substr(comma + 1, arrow - comma - 1));
  plan.lo = std::string(spec.substr(arrow + 2));

  auto check_labels = [&](const std::string& labels, const char* what) {
    std::array<bool, 128> seen{};
    for (char c : labels) {
      const auto u = static_cast<unsigned char>(c);
      if (u >= 128 || !std::isalpha(u)) {
        throw ShapeError(std::string("contract: invalid label in ") + what + " of '" +
                         std::string(spec) + "'");
      }
      if (seen[u]) {
        throw ShapeError(std::string("contract: repeated label '") + c + "' in " + what);
      }
      seen[u] = true;
    }
  };
  check_labels(plan.la, "first operand");
  check_labels(plan.lb, "second operand");
  check_labels(plan.lo, "output");

  if (plan.la.size() != a.rank() || plan.lb.size() != b.rank()) {
    throw ShapeError("contract: spec '" + std::string(spec) + "' does not match ranks of " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  std::array<bool, 128> known{};
  for (std::size_t k = 0; k < plan.la.size(); ++k) {
    const auto u = static_cast<unsigned char>(plan.la[k]);
    plan.size[u] = a.shape()[k];
    known[u] = true;
  }
  for (std::size_t k = 0; k < plan.lb.size(); ++k) {
    const auto u = static_cast<unsigned char>(plan.lb[k]);
    if (known[u] && plan.size[u] != b.shape()[k]) {
      throw ShapeError("contract: paired axis '" + std::string(1, plan.lb[k]) + "' has size " +
                       std::to_string(plan.size[u]) + " in " + shape_str(a.shape()) + " but " +
                       std::to_string(b.shape()[k]) + " in " + shape_str(b.shape()));
    }
    plan.size[u] = b.shape()[k];
    known[u] = true;
  }
  for (char c : plan.lo) {
    if (!known[static_cast<unsigned char>(c)]) {
      throw ShapeError("contract: output label '" + std::string(1, c) + "' not in any operand");
    }
  }
  auto in = [](const std::string& s, char c) { return s.find(c) != std::string::npos; };
  for (char c : plan.la + plan.lb) {
    const bool both = in(plan.la, c) && in(plan.lb, c);
    if (!both && !in(plan.lo, c)) {
      throw ShapeError("contract: label '" + std::string(1, c) +
                       "' appears in one operand only and must be kept in the output");
    }
    if (both && !in(plan.lo, c) &&
        std::find(plan.sum_labels.begin(), plan.sum_labels.end(), c) == plan.sum_labels.end()) {
      plan.sum_labels.push_back(c);
    }
  }
  return plan;
}

Tensor contract_forward(const Tensor& a, const Tensor& b, const ContractPlan& plan) {
  const auto stride_a = row_major_strides(a.shape());
  const auto stride_b = row_major_strides(b.shape());
  auto label_stride = [](const std::string& labels, const std::vector<std::size_t>& strides,
                         char c) -> std::size_t {
    const auto pos = labels.find(c);
    return pos == std::string::npos ? 0 : strides[pos];
  };

  Shape out_shape;
  std::vector<std::size_t> out_sa, out_sb;
  for (char c : plan.lo) {
    out_shape.push_back(plan.size[static_cast<unsigned char>(c)]);
    out_sa.push_back(label_stride(plan.la, stride_a, c));
    out_sb.push_back(label_stride(plan.lb, stride_b, c));
  }
  std::vector<std::size_t> sum_dims, sum_sa, sum_sb;
  for (char c : plan.sum_labels) {
    sum_dims.push_back(plan.size[static_cast<unsigned char>(c)]);
    sum_sa.push_back(label_stride(plan.la, stride_a, c));
    sum_sb.push_back(label_stride(plan.lb, stride_b, c));
  }
  const auto off_a = offset_table(sum_dims, sum_sa);
  const auto off_b = offset_table(sum_dims, sum_sb);

  return std::visit(
      [&](const auto& va) {
        using V = std::decay_t<decltype(va)>;
        using T = typename V::value_type;
        const auto& vb = std::get<V>(TensorAccess::storage(b));
        const std::size_t n = shape_numel(out_shape);
        const std::size_t terms = off_a.size();
        std::vector<T> out(n);
        DualOdometer it(out_shape, out_sa, out_sb);
        for (std::size_t o = 0; o < n; ++o, it.next()) {
          const T* pa = va.data() + it.a;
          const T* pb = vb.data() + it.b;
          T acc = T(0);
          for (std::size_t s = 0; s < terms; ++s) acc += pa[off_a[s]] * pb[off_b[s]];
          out[o] = acc;
        }
        return TensorAccess::make(out_shape, std::move(out));
      },
      TensorAccess::storage(a));
}

// ---------------------------------------------------------------------------
// Reduction

Tensor reduce_forward(const Tensor& t, const std::vector<std::size_t>& axes, ReduceMode mode) {
  const auto strides = row_major_strides(t.shape());
  std::vector<bool> reduced(t.rank(), false);
  for (auto ax : axes) reduced[ax] = true;
  Shape out_shape;
  std::vector<std::size_t> keep_dims, keep_strides, red_dims, red_strides;
  std::size_t count = 1;
  for (std::size_t k = 0; k < t.rank(); ++k) {
    if (reduced[k]) {
      red_dims.push_back(t.shape()[k]);
      red_strides.push_back(strides[k]);
      count *= t.shape()[k];
    } else {
      out_shape.push_back(t.shape()[k]);
      keep_dims.push_back(t.shape()[k]);
      keep_strides.push_back(strides[k]);
    }
  }
  const auto inner = offset_table(red_dims, red_strides);
  return std::visit(
      [&](const auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        const std::size_t n = shape_numel(out_shape);
        std::vector<T> out(n);
        DualOdometer it(keep_dims, keep_strides, std::vector<std::size_t>(keep_dims.size(), 0));
        for (std::size_t o = 0; o < n; ++o, it.next()) {
          const T* base = v.data() + it.a;
          T acc = T(0);
          for (std::size_t off : inner) acc += base[off];
          out[o] = mode == ReduceMode::Mean ? acc / static_cast<T>(count) : acc;
        }
        return TensorAccess::make(out_shape, std::move(out));
      },
      TensorAccess::storage(t));
}

// Broadcasts a reduced gradient back over the reduced axes.
Tensor expand_reduced(const Tensor& g, const Shape& in_shape, const std::vector<bool>& reduced) {
  Shape kept_shape;
  for (std::size_t k = 0; k < in_shape.size(); ++k) kept_shape.push_back(reduced[k] ? 1 : in_shape[k]);
  const Tensor gk = reshape(g, kept_shape);
  return mul(gk, Tensor::full(in_shape, 1.0, g.dtype()));
}

// ---------------------------------------------------------------------------
// Layout

Tensor transpose_forward(const Tensor& t, const std::vector<std::size_t>& perm) {
  const auto in_strides = row_major_strides(t.shape());
  Shape out_shape;
  std::vector<std::size_t> src_strides;
  for (auto p : perm) {
    out_shape.push_back(t.shape()[p]);
    src_strides.push_back(in_strides[p]);
  }
  return std::visit(
      [&](const auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        const std::size_t n = v.size();
        std::vector<T> out(n);
        DualOdometer it(out_shape, src_strides, std::vector<std::size_t>(out_shape.size(), 0));
        for (std::size_t o = 0; o < n; ++o, it.next()) out[o] = v[it.a];
        return TensorAccess::make(out_shape, std::move(out));
      },
      TensorAccess::storage(t));
}

// Copies `t` into a zero-filled tensor of `t`'s shape with `axis` widened to
// `total`, placing it at `offset`.
Tensor embed_axis(const Tensor& t, std::size_t axis, std::size_t offset, std::size_t total,
                  double fill) {
  Shape out_shape = t.shape();
  out_shape[axis] = total;
  std::size_t outer = 1, inner = 1;
  for (std::size_t k = 0; k < axis; ++k) outer *= t.shape()[k];
  for (std::size_t k = axis + 1; k < t.rank(); ++k) inner *= t.shape()[k];
  const std::size_t len = t.shape()[axis];
  return std::visit(
      [&](const auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        std::vector<T> out(shape_numel(out_shape), static_cast<T>(fill));
        for (std::size_t o = 0; o < outer; ++o) {
          std::copy_n(v.data() + o * len * inner, len * inner,
                      out.data() + (o * total + offset) * inner);
        }
        return TensorAccess::make(out_shape, std::move(out));
      },
      TensorAccess::storage(t));
}

Tensor slice_forward(const Tensor& t, std::size_t axis, std::size_t begin, std::size_t end) {
  Shape out_shape = t.shape();
  out_shape[axis] = end - begin;
  std::size_t outer = 1, inner = 1;
  for (std::size_t k = 0; k < axis; ++k) outer *= t.shape()[k];
  for (std::size_t k = axis + 1; k < t.rank(); ++k) inner *= t.shape()[k];
  const std::size_t len = t.shape()[axis];
  const std::size_t width = end - begin;
  return std::visit(
      [&](const auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        std::vector<T> out(shape_numel(out_shape));
        for (std::size_t o = 0; o < outer; ++o) {
          std::copy_n(v.data() + (o * len + begin) * inner, width * inner,
                      out.data() + o * width * inner);
        }
        return TensorAccess::make(out_shape, std::move(out));
      },
      TensorAccess::storage(t));
}

void check_axis(const Tensor& t, std::size_t axis, const char* op) {
  if (axis >= t.rank()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(t.shape()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------

Tensor relu(const Tensor& t) {
  Tensor out = map_unary(t, [](auto v) { return v > 0 ? v : decltype(v)(0); });
  return record(out, {&t}, [x = t.detached()](const Tensor& g, const std::vector<bool>&) {
    const Tensor mask = map_unary(x, [](auto v) { return v > 0 ? decltype(v)(1) : decltype(v)(0); });
    return std::vector<Tensor>{mul(g, mask)};
  });
}

Tensor leaky_relu(const Tensor& t, double slope) {
  Tensor out = map_unary(t, [slope](auto v) {
    using T = decltype(v);
    return v > 0 ? v : static_cast<T>(slope) * v;
  });
  return record(out, {&t}, [x = t.detached(), slope](const Tensor& g, const std::vector<bool>&) {
    const Tensor d = map_unary(x, [slope](auto v) {
      using T = decltype(v);
      return v > 0 ? T(1) : static_cast<T>(slope);
    });
    return std::vector<Tensor>{mul(g, d)};
  });
}

Tensor sigmoid(const Tensor& t) {
  Tensor out = map_unary(t, [](auto v) {
    using T = decltype(v);
    // Branches keep exp() away from overflow for large |v|.
    if (v >= 0) return T(1) / (T(1) + std::exp(-v));
    const T e = std::exp(v);
    return e / (T(1) + e);
  });
  return record(out, {&t}, [y = out.detached()](const Tensor& g, const std::vector<bool>&) {
    const Tensor d = map_unary(y, [](auto v) { return v * (decltype(v)(1) - v); });
    return std::vector<Tensor>{mul(g, d)};
  });
}

Tensor scale(const Tensor& t, double k) {
  Tensor out = map_unary(t, [k](auto v) { return static_cast<decltype(v)>(k) * v; });
  return record(out, {&t}, [k](const Tensor& g, const std::vector<bool>&) {
    return std::vector<Tensor>{scale(g, k)};
  });
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t da = k < rank - a.size() ? 1 : a[k - (rank - a.size())];
    const std::size_t db = k < rank - b.size() ? 1 : b[k - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast shapes " + shape_str(a) + " and " + shape_str(b));
    }
    out[k] = std::max(da, db);
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = map_binary(a, b, "add", [](auto x, auto y) { return x + y; });
  return record(out, {&a, &b},
                [sa = a.shape(), sb = b.shape()](const Tensor& g, const std::vector<bool>& needs) {
                  return std::vector<Tensor>{needs[0] ? unbroadcast(g, sa) : Tensor{},
                                             needs[1] ? unbroadcast(g, sb) : Tensor{}};
                });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tensor out = map_binary(a, b, "mul", [](auto x, auto y) { return x * y; });
  return record(out, {&a, &b},
                [x = a.detached(), y = b.detached()](const Tensor& g, const std::vector<bool>& needs) {
                  return std::vector<Tensor>{needs[0] ? unbroadcast(mul(g, y), x.shape()) : Tensor{},
                                             needs[1] ? unbroadcast(mul(g, x), y.shape()) : Tensor{}};
                });
}

Tensor contract(const Tensor& a, const Tensor& b, std::string_view spec) {
  require_same_dtype(a, b, "contract");
  const ContractPlan plan = parse_contract(a, b, spec);
  Tensor out = contract_forward(a, b, plan);
  return record(out, {&a, &b},
                [x = a.detached(), y = b.detached(), plan](const Tensor& g,
                                                           const std::vector<bool>& needs) {
                  std::vector<Tensor> grads(2);
                  if (needs[0]) grads[0] = contract(g, y, plan.lo + "," + plan.lb + "->" + plan.la);
                  if (needs[1]) grads[1] = contract(g, x, plan.lo + "," + plan.la + "->" + plan.lb);
                  return grads;
                });
}

Tensor matmul_last(const Tensor& t, const Tensor& w) {
  if (t.rank() == 0 || w.rank() != 2 || t.shape().back() != w.shape()[0]) {
    throw ShapeError("matmul_last: cannot multiply " + shape_str(t.shape()) + " by " +
                     shape_str(w.shape()));
  }
  const std::size_t k = t.shape().back();
  const std::size_t rows = t.numel() / k;
  Tensor flat = reshape(t, {rows, k});
  Tensor prod = contract(flat, w, "pk,kd->pd");
  Shape out_shape = t.shape();
  out_shape.back() = w.shape()[1];
  return reshape(prod, out_shape);
}

Tensor softmax(const Tensor& t, std::size_t axis) {
  check_axis(t, axis, "softmax");
  std::size_t outer = 1, inner = 1;
  for (std::size_t k = 0; k < axis; ++k) outer *= t.shape()[k];
  for (std::size_t k = axis + 1; k < t.rank(); ++k) inner *= t.shape()[k];
  const std::size_t len = t.shape()[axis];
  Tensor out = std::visit(
      [&](const auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        std::vector<T> y(v.size());
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = o * len * inner + i;
            T peak = v[base];
            for (std::size_t k = 1; k < len; ++k) peak = std::max(peak, v[base + k * inner]);
            T total = T(0);
            for (std::size_t k = 0; k < len; ++k) {
              const T e = std::exp(v[base + k * inner] - peak);
              y[base + k * inner] = e;
              total += e;
            }
            for (std::size_t k = 0; k < len; ++k) y[base + k * inner] /= total;
          }
        }
        return TensorAccess::make(t.shape(), std::move(y));
      },
      TensorAccess::storage(t));
  return record(out, {&t}, [y = out.detached(), axis](const Tensor& g, const std::vector<bool>&) {
    // dx = y * (g - sum_axis(g * y))
    const Tensor gy = mul(g, y);
    Shape kept = y.shape();
    kept[axis] = 1;
    const Tensor s = reshape(reduce(gy, {axis}, ReduceMode::Sum), kept);
    return std::vector<Tensor>{mul(y, add(g, scale(s, -1.0)))};
  });
}

Tensor reduce(const Tensor& t, std::vector<std::size_t> axes, ReduceMode mode) {
  std::vector<bool> reduced(t.rank(), false);
  for (auto ax : axes) {
    check_axis(t, ax, "reduce");
    if (reduced[ax]) throw ShapeError("reduce: duplicate axis " + std::to_string(ax));
    reduced[ax] = true;
  }
  Tensor out = reduce_forward(t, axes, mode);
  std::size_t count = 1;
  for (auto ax : axes) count *= t.shape()[ax];
  return record(out, {&t},
                [in_shape = t.shape(), reduced, mode, count](const Tensor& g,
                                                             const std::vector<bool>&) {
                  Tensor e = expand_reduced(g, in_shape, reduced);
                  if (mode == ReduceMode::Mean) e = scale(e, 1.0 / static_cast<double>(count));
                  return std::vector<Tensor>{e};
                });
}

Tensor sum_all(const Tensor& t) {
  std::vector<std::size_t> axes(t.rank());
  std::iota(axes.begin(), axes.end(), 0);
  return reduce(t, axes, ReduceMode::Sum);
}

Tensor reshape(const Tensor& t, Shape shape) {
  if (shape_numel(shape) != t.numel()) {
    throw ShapeError("reshape: " + shape_str(t.shape()) + " has " + std::to_string(t.numel()) +
                     " elements, target " + shape_str(shape) + " has " +
                     std::to_string(shape_numel(shape)));
  }
  Tensor out = t.with_shape(std::move(shape));
  return record(out, {&t}, [in_shape = t.shape()](const Tensor& g, const std::vector<bool>&) {
    return std::vector<Tensor>{reshape(g, in_shape)};
  });
}

Tensor transpose(const Tensor& t, std::vector<std::size_t> perm) {
  if (perm.size() != t.rank()) {
    throw ShapeError("transpose: permutation of length " + std::to_string(perm.size()) +
                     " for shape " + shape_str(t.shape()));
  }
  std::vector<bool> seen(perm.size(), false);
  for (auto p : perm) {
    if (p >= perm.size() || seen[p]) throw ShapeError("transpose: invalid permutation");
    seen[p] = true;
  }
  Tensor out = transpose_forward(t, perm);
  std::vector<std::size_t> inverse(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) inverse[perm[k]] = k;
  return record(out, {&t}, [inverse](const Tensor& g, const std::vector<bool>&) {
    return std::vector<Tensor>{transpose(g, inverse)};
  });
}

Tensor pad_axis(const Tensor& t, std::size_t axis, std::size_t count, double value) {
  check_axis(t, axis, "pad_axis");
  if (count == 0) return t;
  const std::size_t len = t.shape()[axis];
  Tensor out = embed_axis(t, axis, 0, len + count, value);
  return record(out, {&t}, [axis, len](const Tensor& g, const std::vector<bool>&) {
    return std::vector<Tensor>{slice_axis(g, axis, 0, len)};
  });
}

Tensor slice_axis(const Tensor& t, std::size_t axis, std::size_t begin, std::size_t end) {
  check_axis(t, axis, "slice_axis");
  const std::size_t len = t.shape()[axis];
  if (begin >= end || end > len) {
    throw ShapeError("slice_axis: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for axis of size " + std::to_string(len));
  }
  if (begin == 0 && end == len) return t;
  Tensor out = slice_forward(t, axis, begin, end);
  return record(out, {&t}, [axis, begin, len](const Tensor& g, const std::vector<bool>&) {
    return std::vector<Tensor>{embed_axis(g, axis, begin, len, 0.0)};
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (parts.size() == 1) return parts.front();
  const Tensor& first = parts.front();
  check_axis(first, axis, "concat");
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_same_dtype(first, p, "concat");
    Shape a = first.shape(), b = p.shape();
    if (a.size() != b.size()) throw ShapeError("concat: rank mismatch");
    a[axis] = b[axis] = 0;
    if (a != b) {
      throw ShapeError("concat: shapes " + shape_str(first.shape()) + " and " +
                       shape_str(p.shape()) + " differ off axis " + std::to_string(axis));
    }
    total += p.shape()[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t k = 0; k < axis; ++k) outer *= first.shape()[k];
  for (std::size_t k = axis + 1; k < first.rank(); ++k) inner *= first.shape()[k];
  Shape out_shape = first.shape();
  out_shape[axis] = total;

  Tensor out = std::visit(
      [&](const auto& v0) {
        using V = std::decay_t<decltype(v0)>;
        using T = typename V::value_type;
        std::vector<T> out_values(shape_numel(out_shape));
        std::size_t offset = 0;
        for (const auto& p : parts) {
          const auto& v = std::get<V>(TensorAccess::storage(p));
          const std::size_t len = p.shape()[axis];
          for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(v.data() + o * len * inner, len * inner,
                        out_values.data() + (o * total + offset) * inner);
          }
          offset += len;
        }
        return TensorAccess::make(out_shape, std::move(out_values));
      },
      TensorAccess::storage(first));

  std::vector<const Tensor*> inputs;
  std::vector<std::size_t> bounds{0};
  for (const auto& p : parts) {
    inputs.push_back(&p);
    bounds.push_back(bounds.back() + p.shape()[axis]);
  }
  return record(out, inputs, [axis, bounds](const Tensor& g, const std::vector<bool>& needs) {
    std::vector<Tensor> grads(needs.size());
    for (std::size_t k = 0; k < needs.size(); ++k) {
      if (needs[k]) grads[k] = slice_axis(g, axis, bounds[k], bounds[k + 1]);
    }
    return grads;
  });
}

}  // namespace caa
