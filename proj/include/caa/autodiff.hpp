#pragma once

#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <vector>

#include "caa/tensor.hpp"

namespace caa {

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

// Receives the upstream gradient and a mask of which inputs need one;
// returns one gradient per input (undefined where not needed).
using GradFn = std::function<std::vector<Tensor>(const Tensor& upstream,
                                                 const std::vector<bool>& needs)>;

struct TapeNode {
  std::vector<std::ptrdiff_t> parents;  // -1 for inputs that are not on the tape
  GradFn grad_fn;
  Shape shape;
  DType dtype;
  bool parameter = false;
};

struct TapeState {
  std::vector<TapeNode> nodes;
};

/// Links `out` into the tape shared by `inputs`, if any input is on one.
Tensor record(Tensor out, const std::vector<const Tensor*>& inputs, GradFn grad_fn);

}  // namespace detail

class Tape;
class Gradients;
Gradients backward(const Tape& tape, const Tensor& output);

/// Reverse-mode differentiation tape. Operations on watched tensors (and
/// anything derived from them) append nodes in execution order.
class Tape {
 public:
  Tape();

  /// Registers `value` as a parameter and returns a linked copy.
  Tensor watch(const Tensor& value);
  std::size_t size() const { return state_->nodes.size(); }

 private:
  friend class Gradients;
  friend Gradients backward(const Tape& tape, const Tensor& output);
  std::shared_ptr<detail::TapeState> state_;
};

class Gradients {
 public:
  /// Gradient for a tensor returned by Tape::watch.
  const Tensor& of(const Tensor& parameter) const;
  bool contains(const Tensor& parameter) const;
  std::size_t size() const { return by_node_.size(); }

 private:
  friend Gradients backward(const Tape& tape, const Tensor& output);
  std::weak_ptr<detail::TapeState> tape_;
  std::map<std::size_t, Tensor> by_node_;
};

/// d(output)/d(parameter) for every watched parameter. Parameters that do not
/// reach the output get a zero gradient.
Gradients backward(const Tape& tape, const Tensor& output);

/// Central differences (f(x+eps e_k) - f(x-eps e_k)) / 2 eps per coordinate,
/// evaluated in float64.
Tensor finite_diff(const std::function<double(const Tensor&)>& f, const Tensor& x,
                   double eps = 1e-5);

}  // namespace caa
