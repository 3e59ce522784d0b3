#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace caa {

using Shape = std::vector<std::size_t>;

enum class DType : std::uint8_t { Float32 = 0, Float64 = 1 };

const char* dtype_name(DType dtype);
DType parse_dtype(const std::string& name);
std::size_t dtype_size(DType dtype);

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DTypeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A request exceeds a configured element or memory cap.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// Owns the element storage and reports its footprint to the memory tracker.
class Buffer {
 public:
  using Storage = std::variant<std::vector<float>, std::vector<double>>;

  explicit Buffer(Storage storage);
  ~Buffer();
  Buffer(const Buffer&) = delete;
  Buffer& operator=(const Buffer&) = delete;

  const Storage& storage() const { return storage_; }
  std::size_t size() const;
  DType dtype() const;

 private:
  Storage storage_;
};

struct TapeState;

struct TapeLink {
  std::weak_ptr<TapeState> tape;
  std::size_t node = 0;
};

}  // namespace detail

/// Dense row-major tensor. Immutable once constructed: every operation
/// returns a new tensor, and copies share the underlying buffer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype = DType::Float64);
  static Tensor full(Shape shape, double value, DType dtype = DType::Float64);
  static Tensor scalar(double value, DType dtype = DType::Float64);
  /// Values are converted to `dtype`.
  static Tensor from_values(Shape shape, std::span<const double> values,
                            DType dtype = DType::Float64);
  static Tensor from_values(Shape shape, std::initializer_list<double> values,
                            DType dtype = DType::Float64);

  template <typename T>
  static Tensor from_vector(Shape shape, std::vector<T> values);

  bool defined() const { return static_cast<bool>(buffer_); }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return shape_numel(shape_); }
  std::size_t dim(std::size_t axis) const;
  DType dtype() const;

  /// Typed view of the payload; throws DTypeError if T does not match.
  template <typename T>
  std::span<const T> data() const;

  std::vector<double> to_doubles() const;
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  Tensor astype(DType dtype) const;

  /// Same shape and buffer with the storage viewed under a new shape.
  Tensor with_shape(Shape shape) const;

  /// Copy that is not linked to any differentiation tape.
  Tensor detached() const;

  bool on_tape() const;
  const detail::TapeLink* tape_link() const;
  bool same_buffer(const Tensor& other) const { return buffer_ == other.buffer_; }

 private:
  friend struct TensorAccess;

  Shape shape_;
  std::shared_ptr<const detail::Buffer> buffer_;
  std::shared_ptr<detail::TapeLink> link_;
};

/// Bitwise equality of shape, dtype and payload.
bool bitwise_equal(const Tensor& a, const Tensor& b);

/// max|a-b| / max|b|, falling back to max|a-b| when b is identically zero.
double max_relative_error(const Tensor& a, const Tensor& b);
double max_abs_difference(const Tensor& a, const Tensor& b);
double max_abs(const Tensor& t);

// Internal construction hooks shared by the op implementations.
struct TensorAccess {
  static Tensor make(Shape shape, detail::Buffer::Storage storage);
  static Tensor with_link(Tensor t, std::shared_ptr<detail::TapeLink> link);
  static const detail::Buffer::Storage& storage(const Tensor& t);
};

template <typename T>
Tensor Tensor::from_vector(Shape shape, std::vector<T> values) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("from_vector: shape " + shape_str(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  return TensorAccess::make(std::move(shape), detail::Buffer::Storage(std::move(values)));
}

template <typename T>
std::span<const T> Tensor::data() const {
  if (!buffer_) throw DTypeError("data(): undefined tensor");
  const auto* vec = std::get_if<std::vector<T>>(&buffer_->storage());
  if (vec == nullptr) {
    throw DTypeError(std::string("data(): tensor holds ") + dtype_name(dtype()));
  }
  return {vec->data(), vec->size()};
}

}  // namespace caa
