#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "wisa/numcore/tensor.hpp"

namespace wisa::numcore {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::uint32_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool needs_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Reverse-mode computation record.
///
/// Every primitive appends one node holding its output value and a closure
/// that maps the output adjoint onto its parents' adjoints. A tape is built
/// for one forward pass, consumed by a single backward() call and then
/// discarded. Not thread-safe; confine to one thread.
class Tape {
 public:
  // Receives the output adjoint; accumulates into parents via Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value);

  // Records an operation. `needs_grad` should be true iff any parent needs a gradient;
  // when false the backward closure is dropped.
  Var record(Tensor value, bool needs_grad, BackwardFn backward);

  // Seeds d(root)/d(root) = 1 and propagates. Returns the number of operations visited.
  // When `visit_order` is given, the ids of visited operations are appended in order.
  std::size_t backward(Var root, std::vector<std::uint32_t>* visit_order = nullptr);
  // As backward(), but with an explicit adjoint for a non-scalar root.
  std::size_t backward_with(Var root, Tensor seed, std::vector<std::uint32_t>* visit_order = nullptr);

  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }

  // Gradient of the last backward root with respect to v (zeros if unreached).
  Tensor grad(Var v) const;

  // Adds `g` into the adjoint of node `id`. Called from backward closures.
  void accumulate(std::uint32_t id, const Tensor& g);
  // Direct access to the adjoint buffer, allocated on first use.
  Tensor& grad_buffer(std::uint32_t id);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    bool is_leaf = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

}  // namespace wisa::numcore
