#include "caa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "caa/autodiff.hpp"
#include "caa/memory.hpp"

namespace caa {

const char* dtype_name(DType dtype) {
  return dtype == DType::Float32 ? "float32" : "float64";
}

DType parse_dtype(const std::string& name) {
  if (name == "float32" || name == "f32") return DType::Float32;
  if (name == "float64" || name == "f64") return DType::Float64;
  throw DTypeError("unknown dtype '" + name + "' (expected float32 or float64)");
}

std::size_t dtype_size(DType dtype) { return dtype == DType::Float32 ? 4 : 8; }

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

Buffer::Buffer(Storage storage) : storage_(std::move(storage)) {
  memory::detail::on_allocate(static_cast<std::int64_t>(size()));
}

Buffer::~Buffer() { memory::detail::on_release(static_cast<std::int64_t>(size())); }

std::size_t Buffer::size() const {
  return std::visit([](const auto& v) { return v.size(); }, storage_);
}

DType Buffer::dtype() const {
  return std::holds_alternative<std::vector<float>>(storage_) ? DType::Float32
                                                              : DType::Float64;
}

}  // namespace detail

namespace {

void check_dims(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  }
}

}  // namespace

Tensor TensorAccess::make(Shape shape, detail::Buffer::Storage storage) {
  check_dims(shape);
  Tensor t;
  t.buffer_ = std::make_shared<const detail::Buffer>(std::move(storage));
  if (t.buffer_->size() != shape_numel(shape)) {
    throw ShapeError("buffer of " + std::to_string(t.buffer_->size()) +
                     " elements does not match shape " + shape_str(shape));
  }
  t.shape_ = std::move(shape);
  return t;
}

Tensor TensorAccess::with_link(Tensor t, std::shared_ptr<detail::TapeLink> link) {
  t.link_ = std::move(link);
  return t;
}

const detail::Buffer::Storage& TensorAccess::storage(const Tensor& t) {
  if (!t.buffer_) throw DTypeError("operation on an undefined tensor");
  return t.buffer_->storage();
}

Tensor Tensor::zeros(Shape shape, DType dtype) { return full(std::move(shape), 0.0, dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  const std::size_t n = shape_numel(shape);
  if (dtype == DType::Float32) {
    return TensorAccess::make(std::move(shape),
                              std::vector<float>(n, static_cast<float>(value)));
  }
  return TensorAccess::make(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value, DType dtype) { return full({}, value, dtype); }

Tensor Tensor::from_values(Shape shape, std::span<const double> values, DType dtype) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("from_values: shape " + shape_str(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  if (dtype == DType::Float32) {
    return TensorAccess::make(std::move(shape), std::vector<float>(values.begin(), values.end()));
  }
  return TensorAccess::make(std::move(shape), std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::from_values(Shape shape, std::initializer_list<double> values, DType dtype) {
  return from_values(std::move(shape), std::span<const double>(values.begin(), values.size()),
                     dtype);
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(shape_));
  }
  return shape_[axis];
}

DType Tensor::dtype() const {
  if (!buffer_) throw DTypeError("dtype(): undefined tensor");
  return buffer_->dtype();
}

std::vector<double> Tensor::to_doubles() const {
  return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); },
                    TensorAccess::storage(*this));
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
  return std::visit([](const auto& v) { return static_cast<double>(v[0]); },
                    TensorAccess::storage(*this));
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw ShapeError("at(): index rank " + std::to_string(index.size()) +
                     " does not match shape " + shape_str(shape_));
  }
  std::size_t offset = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) throw ShapeError("at(): index out of range for " + shape_str(shape_));
    offset = offset * shape_[axis] + i;
    ++axis;
  }
  return std::visit([offset](const auto& v) { return static_cast<double>(v[offset]); },
                    TensorAccess::storage(*this));
}

Tensor Tensor::astype(DType dtype) const {
  if (this->dtype() == dtype) return detached();
  const auto values = to_doubles();
  return from_values(shape_, values, dtype);
}

Tensor Tensor::with_shape(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw ShapeError("cannot view " + shape_str(shape_) + " as " + shape_str(shape));
  }
  check_dims(shape);
  Tensor t = *this;
  t.shape_ = std::move(shape);
  t.link_.reset();
  return t;
}

Tensor Tensor::detached() const {
  Tensor t = *this;
  t.link_.reset();
  return t;
}

bool Tensor::on_tape() const {
  return link_ != nullptr && !link_->tape.expired();
}

const detail::TapeLink* Tensor::tape_link() const { return on_tape() ? link_.get() : nullptr; }

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!a.defined() || !b.defined()) return a.defined() == b.defined();
  if (a.shape() != b.shape() || a.dtype() != b.dtype()) return false;
  if (a.same_buffer(b)) return true;
  return std::visit(
      [&](const auto& va) {
        using V = std::decay_t<decltype(va)>;
        const auto& vb = std::get<V>(TensorAccess::storage(b));
        return std::memcmp(va.data(), vb.data(), va.size() * sizeof(typename V::value_type)) == 0;
      },
      TensorAccess::storage(a));
}

double max_abs_difference(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("compare: shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
  }
  const auto va = a.to_doubles();
  const auto vb = b.to_doubles();
  double worst = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double d = std::abs(va[i] - vb[i]);
    if (!(d <= worst)) worst = d;  // propagates NaN
  }
  return worst;
}

double max_abs(const Tensor& t) {
  double worst = 0.0;
  for (double v : t.to_doubles()) worst = std::max(worst, std::abs(v));
  return worst;
}

double max_relative_error(const Tensor& a, const Tensor& b) {
  const double diff = max_abs_difference(a, b);
  const double scale = max_abs(b);
  return scale > 0.0 ? diff / scale : diff;
}

}  // namespace caa
