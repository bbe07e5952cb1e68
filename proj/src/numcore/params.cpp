#include "wisa/numcore/params.hpp"

#include "wisa/errors.hpp"

namespace wisa::numcore {

std::size_t ParameterSet::add(std::string name, Tensor value, bool trainable) {
  if (index_.contains(name)) throw UsageError("duplicate parameter '" + name + "'");
  const std::size_t i = params_.size();
  index_.emplace(name, i);
  params_.push_back(Parameter{std::move(name), std::move(value), trainable});
  return i;
}

std::optional<std::size_t> ParameterSet::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ParameterSet::index(std::string_view name) const {
  auto i = find(name);
  if (!i) throw UsageError("unknown parameter '" + std::string(name) + "'");
  return *i;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::size_t ParameterSet::trainable_scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p.trainable) n += p.value.size();
  return n;
}

Binding::Binding(Tape& tape, const ParameterSet& params, BindMode mode)
    : tape_(&tape), params_(&params), mode_(mode), vars_(params.size()) {}

Var Binding::operator()(std::size_t index) {
  auto& slot = vars_.at(index);
  if (!slot) {
    const Parameter& p = (*params_)[index];
    const bool leaf = mode_ == BindMode::All || (mode_ == BindMode::Trainable && p.trainable);
    slot = leaf ? tape_->leaf(p.value) : tape_->constant(p.value);
  }
  return *slot;
}

Tensor Binding::grad(std::size_t index) const {
  const auto& slot = vars_.at(index);
  if (!slot) return Tensor((*params_)[index].value.shape(), 0.0);
  return tape_->grad(*slot);
}

}  // namespace wisa::numcore
