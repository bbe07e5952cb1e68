#include "wisa/numcore/tape.hpp"

#include "wisa/errors.hpp"

namespace wisa::numcore {

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::needs_grad() const { return tape_->needs_grad(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor{}, false, true, {}});
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::leaf(Tensor value) {
  value.set_requires_grad(true);
  nodes_.push_back(Node{std::move(value), Tensor{}, true, true, {}});
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::record(Tensor value, bool needs_grad, BackwardFn backward) {
  Node node{std::move(value), Tensor{}, needs_grad, false, {}};
  if (needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

std::size_t Tape::backward(Var root, std::vector<std::uint32_t>* visit_order) {
  if (root.value().size() != 1) {
    throw DimensionError("backward() needs a scalar root, got shape " + shape_to_string(root.shape()));
  }
  return backward_with(root, Tensor(root.shape(), 1.0), visit_order);
}

std::size_t Tape::backward_with(Var root, Tensor seed, std::vector<std::uint32_t>* visit_order) {
  if (root.id() >= nodes_.size() || &root.tape() != this) throw UsageError("backward root is not on this tape");
  if (seed.shape() != root.shape()) {
    throw DimensionError("backward seed shape " + shape_to_string(seed.shape()) + " does not match root " +
                         shape_to_string(root.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor{};
  std::size_t visited = 0;
  if (!nodes_[root.id()].needs_grad) return visited;
  nodes_[root.id()].grad = std::move(seed);
  for (std::int64_t i = root.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.is_leaf || !n.needs_grad || n.grad.empty()) continue;
    ++visited;
    if (visit_order) visit_order->push_back(static_cast<std::uint32_t>(i));
    // Closures only write to parents, which have smaller ids.
    n.backward(*this, n.grad);
  }
  return visited;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
  return n.grad;
}

Tensor& Tape::grad_buffer(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::accumulate(std::uint32_t id, const Tensor& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (g.shape() != n.value.shape()) {
    throw DimensionError("adjoint shape " + shape_to_string(g.shape()) + " does not match value " +
                         shape_to_string(n.value.shape()));
  }
  if (n.grad.empty()) {
    n.grad = g;
    return;
  }
  auto dst = n.grad.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace wisa::numcore
