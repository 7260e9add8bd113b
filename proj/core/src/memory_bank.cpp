#include "sotta/memory_bank.hpp"

#include <algorithm>

#include "sotta/errors.hpp"
#include "sotta/network.hpp"

namespace sotta {

double confidence_of(std::span<const double> logits) { return prediction_from_logits(logits).confidence; }

double confidence_of(const Tensor& logits) {
  if (logits.rows() != 1) throw ContractError("confidence_of expects a single logit row");
  return confidence_of(logits.row(0));
}

MemoryBank::MemoryBank(std::size_t capacity, std::size_t classes, std::uint64_t seed, MemoryPolicy policy)
    : capacity_(capacity), policy_(policy), counts_(classes, 0), rng_(seed) {
  if (capacity_ == 0) throw ContractError("memory capacity must be positive");
  if (classes < 2) throw ContractError("memory needs at least two classes");
  items_.reserve(capacity_);
}

std::set<int> MemoryBank::prevalent_classes() const {
  if (items_.empty()) throw ContractError("prevalent_classes on an empty memory");
  const std::size_t top = *std::max_element(counts_.begin(), counts_.end());
  std::set<int> out;
  for (std::size_t k = 0; k < counts_.size(); ++k)
    if (counts_[k] == top) out.insert(static_cast<int>(k));
  return out;
}

int MemoryBank::evict_from(const std::set<int>& classes) {
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < items_.size(); ++i)
    if (classes.contains(items_[i].predicted_label)) candidates.push_back(i);
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  const std::size_t victim = candidates[pick(rng_)];
  const int label = items_[victim].predicted_label;
  --counts_[static_cast<std::size_t>(label)];
  items_.erase(items_.begin() + static_cast<std::ptrdiff_t>(victim));
  return label;
}

InsertOutcome MemoryBank::maybe_insert(const Tensor& features, int predicted_label, double confidence,
                                       double threshold) {
  if (predicted_label < 0 || static_cast<std::size_t>(predicted_label) >= counts_.size()) {
    throw ContractError("maybe_insert: predicted label out of range");
  }
  if (!(confidence > threshold)) return {};

  InsertOutcome outcome{InsertKind::kAppended, -1};
  if (items_.size() >= capacity_) {
    outcome.kind = InsertKind::kReplaced;
    if (policy_ == MemoryPolicy::kFifo) {
      outcome.evicted_class = items_.front().predicted_label;
      --counts_[static_cast<std::size_t>(outcome.evicted_class)];
      items_.erase(items_.begin());
    } else {
      const std::set<int> prevalent = prevalent_classes();
      outcome.evicted_class = prevalent.contains(predicted_label) ? evict_from({predicted_label}) : evict_from(prevalent);
    }
  }
  MemoryItem item{features.rank() == 2 ? features : features.reshaped({1, features.size()}), predicted_label,
                  confidence};
  items_.push_back(std::move(item));
  ++counts_[static_cast<std::size_t>(predicted_label)];
  return outcome;
}

std::optional<Tensor> MemoryBank::as_batch() const {
  if (items_.empty()) return std::nullopt;
  std::vector<Tensor> rows;
  rows.reserve(items_.size());
  for (const auto& item : items_) rows.push_back(item.features);
  return stack_rows(rows);
}

}  // namespace sotta
