#pragma once

#include <string_view>
#include <vector>

#include "caa/tensor.hpp"

// Primitive tensor operations. All of them are pure, record onto the tape of
// their inputs when one is present, and share one accumulation discipline:
// every sum runs over its indices in ascending (row-major) order with an
// accumulator of the element type, so results are bit-reproducible.
namespace caa {

// Elementwise maps.
Tensor relu(const Tensor& t);
Tensor leaky_relu(const Tensor& t, double slope);
Tensor sigmoid(const Tensor& t);
Tensor scale(const Tensor& t, double k);

// Binary ops broadcast over trailing axes: shapes are right-aligned, missing
// leading axes count as size 1, and a size-1 axis expands to match the other
// operand. Anything else is a ShapeError.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Shape broadcast_shape(const Shape& a, const Shape& b);

/// Einsum-style contraction, e.g. "imj,cmn->ijnc". A label present in both
/// operands and absent from the output is summed; a label present in both
/// and in the output is a batch axis. Labels that appear in only one operand
/// must appear in the output, and no label may repeat within one operand.
Tensor contract(const Tensor& a, const Tensor& b, std::string_view spec);

/// Multiplies the trailing axis of `t` by the matrix `w` (rows = t's last dim).
Tensor matmul_last(const Tensor& t, const Tensor& w);

/// Numerically stable softmax along one axis (the slice max is subtracted
/// before exponentiation).
Tensor softmax(const Tensor& t, std::size_t axis);

enum class ReduceMode { Sum, Mean };

/// Removes `axes` by summation (or mean = sum / product of reduced sizes).
Tensor reduce(const Tensor& t, std::vector<std::size_t> axes, ReduceMode mode = ReduceMode::Sum);
Tensor sum_all(const Tensor& t);

Tensor reshape(const Tensor& t, Shape shape);
Tensor transpose(const Tensor& t, std::vector<std::size_t> perm);
/// Appends `count` entries of `value` at the tail of `axis`.
Tensor pad_axis(const Tensor& t, std::size_t axis, std::size_t count, double value = 0.0);
/// Half-open range [begin, end) along `axis`.
Tensor slice_axis(const Tensor& t, std::size_t axis, std::size_t begin, std::size_t end);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

}  // namespace caa
