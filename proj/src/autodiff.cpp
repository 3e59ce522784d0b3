#include "caa/autodiff.hpp"

#include "caa/ops.hpp"

namespace caa {

namespace detail {

Tensor record(Tensor out, const std::vector<const Tensor*>& inputs, GradFn grad_fn) {
  std::shared_ptr<TapeState> tape;
  std::vector<std::ptrdiff_t> parents;
  parents.reserve(inputs.size());
  for (const Tensor* in : inputs) {
    const TapeLink* link = in->tape_link();
    if (link == nullptr) {
      parents.push_back(-1);
      continue;
    }
    auto state = link->tape.lock();
    if (tape && state != tape) throw TapeError("operation mixes tensors from different tapes");
    tape = std::move(state);
    parents.push_back(static_cast<std::ptrdiff_t>(link->node));
  }
  if (!tape) return out;

  TapeNode node;
  node.parents = std::move(parents);
  node.grad_fn = std::move(grad_fn);
  node.shape = out.shape();
  node.dtype = out.dtype();
  tape->nodes.push_back(std::move(node));

  auto link = std::make_shared<TapeLink>();
  link->tape = tape;
  link->node = tape->nodes.size() - 1;
  return TensorAccess::with_link(out.detached(), std::move(link));
}

}  // namespace detail

Tape::Tape() : state_(std::make_shared<detail::TapeState>()) {}

Tensor Tape::watch(const Tensor& value) {
  if (!value.defined()) throw TapeError("watch(): undefined tensor");
  if (value.on_tape()) throw TapeError("watch(): tensor is already on a tape");
  detail::TapeNode node;
  node.shape = value.shape();
  node.dtype = value.dtype();
  node.parameter = true;
  state_->nodes.push_back(std::move(node));
  auto link = std::make_shared<detail::TapeLink>();
  link->tape = state_;
  link->node = state_->nodes.size() - 1;
  return TensorAccess::with_link(value.detached(), std::move(link));
}

const Tensor& Gradients::of(const Tensor& parameter) const {
  const detail::TapeLink* link = parameter.tape_link();
  if (link == nullptr || link->tape.lock() != tape_.lock()) {
    throw TapeError("gradient requested for a tensor that is not on this tape");
  }
  auto it = by_node_.find(link->node);
  if (it == by_node_.end()) throw TapeError("tensor is on the tape but is not a parameter");
  return it->second;
}

bool Gradients::contains(const Tensor& parameter) const {
  const detail::TapeLink* link = parameter.tape_link();
  return link != nullptr && link->tape.lock() == tape_.lock() && by_node_.count(link->node) > 0;
}

Gradients backward(const Tape& tape, const Tensor& output) {
  if (output.numel() != 1) {
    throw TapeError("backward() needs a scalar output, got shape " + shape_str(output.shape()));
  }
  const detail::TapeLink* link = output.tape_link();
  if (link == nullptr || link->tape.lock() != tape.state_) {
    throw TapeError("backward(): output is not on this tape");
  }

  const auto& nodes = tape.state_->nodes;
  std::vector<Tensor> grads(nodes.size());
  grads[link->node] = Tensor::full(output.shape(), 1.0, output.dtype());

  for (std::size_t k = link->node + 1; k-- > 0;) {
    const auto& node = nodes[k];
    if (!grads[k].defined() || node.parameter) continue;
    std::vector<bool> needs;
    needs.reserve(node.parents.size());
    for (auto p : node.parents) needs.push_back(p >= 0);
    const std::vector<Tensor> in_grads = node.grad_fn(grads[k], needs);
    for (std::size_t i = 0; i < node.parents.size(); ++i) {
      const auto p = node.parents[i];
      if (p < 0) continue;
      const Tensor& g = in_grads.at(i);
      if (!g.defined()) continue;
      auto& slot = grads[static_cast<std::size_t>(p)];
      slot = slot.defined() ? add(slot, g) : g;
    }
    // Intermediate gradients are no longer needed once propagated.
    grads[k] = Tensor{};
  }

  Gradients result;
  result.tape_ = tape.state_;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (!nodes[k].parameter) continue;
    result.by_node_[k] = grads[k].defined() ? grads[k] : Tensor::zeros(nodes[k].shape, nodes[k].dtype);
  }
  return result;
}

Tensor finite_diff(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps) {
  const Shape shape = x.shape();
  std::vector<double> base = x.to_doubles();
  std::vector<double> out(base.size());
  const double inv = 0.5 / eps;
  for (std::size_t k = 0; k < base.size(); ++k) {
    const double saved = base[k];
    base[k] = saved + eps;
    const double fp = f(Tensor::from_values(shape, base));
    base[k] = saved - eps;
    const double fm = f(Tensor::from_values(shape, base));
    base[k] = saved;
    out[k] = (fp - fm) * inv;
  }
  return Tensor::from_values(shape, out);
}

}  // namespace caa
