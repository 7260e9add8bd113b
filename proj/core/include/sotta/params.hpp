#pragma once

#include <map>
#include <string>
#include <vector>

#include "sotta/tensor.hpp"

namespace sotta {

struct Param {
  Tensor value;
  bool trainable = true;
};

// Gradients (or any per-parameter tensors) keyed by parameter name.
using GradMap = std::map<std::string, Tensor>;

/// Named parameter tensors, iterated in name order.
class ParamSet {
 public:
  using Map = std::map<std::string, Param>;

  /// Throws ContractError if the name is already present.
  void add(const std::string& name, Tensor value, bool trainable);

  bool contains(const std::string& name) const { return entries_.contains(name); }
  const Param& at(const std::string& name) const;
  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const { return at(name).value; }
  void set_trainable(const std::string& name, bool trainable);

  std::size_t size() const { return entries_.size(); }
  Map::const_iterator begin() const { return entries_.begin(); }
  Map::const_iterator end() const { return entries_.end(); }

  std::vector<std::string> trainable_names() const;
  /// Copy with every parameter marked trainable.
  ParamSet all_trainable() const;

  /// Concatenate per-name tensors of the trainable parameters in name order.
  std::vector<double> flatten(const GradMap& grads) const;
  /// Inverse of flatten: split a flat vector back into trainable-shaped tensors.
  GradMap unflatten(const std::vector<double>& flat) const;
  /// Zero tensors for every trainable parameter.
  GradMap zeros_like_trainable() const;

  bool operator==(const ParamSet& other) const;

 private:
  Map entries_;
};

/// Global L2 norm over every tensor in the map.
double global_norm(const GradMap& grads);

}  // namespace sotta
