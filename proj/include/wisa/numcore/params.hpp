#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "wisa/numcore/tape.hpp"
#include "wisa/numcore/tensor.hpp"

namespace wisa::numcore {

struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

// Named model parameters in insertion order.
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor value, bool trainable = true);

  std::size_t index(std::string_view name) const;
  std::optional<std::size_t> find(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name).has_value(); }

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  Tensor& value(std::string_view name) { return params_[index(name)].value; }
  const Tensor& value(std::string_view name) const { return params_[index(name)].value; }

  std::size_t size() const noexcept { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t scalar_count() const;
  std::size_t trainable_scalar_count() const;

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class BindMode {
  Trainable,  // trainable parameters become leaves, frozen ones constants
  All,        // every parameter becomes a leaf
  Constant,   // nothing records gradients
};

/// Lazily registers parameters of a set on a tape, once each.
class Binding {
 public:
  Binding(Tape& tape, const ParameterSet& params, BindMode mode);

  Var operator()(std::size_t index);
  Tape& tape() const { return *tape_; }
  const ParameterSet& params() const { return *params_; }

  // Gradient of the last backward pass for a bound parameter (zeros when unbound).
  Tensor grad(std::size_t index) const;
  bool bound(std::size_t index) const { return vars_[index].has_value(); }

  // Replace the tensor registered for a parameter by an existing tape variable.
  void override_with(std::size_t index, Var v) { vars_[index] = v; }

 private:
  Tape* tape_;
  const ParameterSet* params_;
  BindMode mode_;
  std::vector<std::optional<Var>> vars_;
};

}  // namespace wisa::numcore
