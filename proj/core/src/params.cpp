#include "sotta/params.hpp"

#include <cmath>

#include "sotta/errors.hpp"

namespace sotta {

void ParamSet::add(const std::string& name, Tensor value, bool trainable) {
  auto [it, inserted] = entries_.emplace(name, Param{std::move(value), trainable});
  if (!inserted) throw ContractError("duplicate parameter name '" + name + "'");
}

const Param& ParamSet::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParamSet::value(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second.value;
}

void ParamSet::set_trainable(const std::string& name, bool trainable) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
  it->second.trainable = trainable;
}

std::vector<std::string> ParamSet::trainable_names() const {
  std::vector<std::string> names;
  for (const auto& [name, p] : entries_)
    if (p.trainable) names.push_back(name);
  return names;
}

ParamSet ParamSet::all_trainable() const {
  ParamSet copy = *this;
  for (auto& [name, p] : copy.entries_) p.trainable = true;
  return copy;
}

std::vector<double> ParamSet::flatten(const GradMap& grads) const {
  std::vector<double> flat;
  for (const auto& [name, p] : entries_) {
    if (!p.trainable) continue;
    auto it = grads.find(name);
    if (it == grads.end()) throw ContractError("flatten: missing gradient for '" + name + "'");
    if (it->second.size() != p.value.size()) throw DimensionError("flatten: size mismatch for '" + name + "'");
    flat.insert(flat.end(), it->second.data().begin(), it->second.data().end());
  }
  return flat;
}

GradMap ParamSet::unflatten(const std::vector<double>& flat) const {
  GradMap out;
  std::size_t offset = 0;
  for (const auto& [name, p] : entries_) {
    if (!p.trainable) continue;
    const std::size_t n = p.value.size();
    if (offset + n > flat.size()) throw DimensionError("unflatten: flat vector too short");
    out.emplace(name, Tensor(p.value.shape(), std::vector<double>(flat.begin() + offset, flat.begin() + offset + n)));
    offset += n;
  }
  if (offset != flat.size()) throw DimensionError("unflatten: flat vector too long");
  return out;
}

GradMap ParamSet::zeros_like_trainable() const {
  GradMap out;
  for (const auto& [name, p] : entries_)
    if (p.trainable) out.emplace(name, Tensor(p.value.shape()));
  return out;
}

bool ParamSet::operator==(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (auto a = entries_.begin(), b = other.entries_.begin(); a != entries_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.trainable != b->second.trainable || !(a->second.value == b->second.value))
      return false;
  }
  return true;
}

double global_norm(const GradMap& grads) {
  double s = 0.0;
  for (const auto& [name, g] : grads)
    for (double v : g.data()) s += v * v;
  return std::sqrt(s);
}

}  // namespace sotta
