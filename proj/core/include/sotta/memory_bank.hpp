#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <vector>

#include "sotta/tensor.hpp"

namespace sotta {

struct MemoryItem {
  Tensor features;  // 1 x d
  int predicted_label = 0;
  double confidence = 0.0;
};

enum class InsertKind { kRejected, kAppended, kReplaced };

struct InsertOutcome {
  InsertKind kind = InsertKind::kRejected;
  /// Class of the evicted item when kind == kReplaced.
  int evicted_class = -1;
};

enum class MemoryPolicy {
  kUniformClass,  // evict from the most prevalent predicted class(es)
  kFifo,          // ring buffer that ignores class balance
};

/// Max softmax probability of a single logit row.
double confidence_of(std::span<const double> logits);
double confidence_of(const Tensor& logits);

/// Fixed-capacity store of confident test samples with a balanced
/// predicted-class histogram.
class MemoryBank {
 public:
  MemoryBank(std::size_t capacity, std::size_t classes, std::uint64_t seed,
             MemoryPolicy policy = MemoryPolicy::kUniformClass);

  /// Admits the sample iff confidence > threshold. Once full, evicts either a
  /// uniformly random item of the prevalent classes (when the new label is
  /// not among them) or a uniformly random item of the new label.
  InsertOutcome maybe_insert(const Tensor& features, int predicted_label, double confidence, double threshold);

  /// Classes attaining the maximum stored count. Throws ContractError when empty.
  std::set<int> prevalent_classes() const;

  /// Stored features stacked oldest first, or nullopt when empty. The bank is
  /// left unchanged.
  std::optional<Tensor> as_batch() const;

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  bool full() const { return items_.size() == capacity_; }
  std::size_t capacity() const { return capacity_; }
  MemoryPolicy policy() const { return policy_; }
  const std::vector<MemoryItem>& items() const { return items_; }
  const std::vector<std::size_t>& class_counts() const { return counts_; }

 private:
  int evict_from(const std::set<int>& classes);

  std::size_t capacity_;
  MemoryPolicy policy_;
  std::vector<MemoryItem> items_;
  std::vector<std::size_t> counts_;
  std::mt19937_64 rng_;
};

}  // namespace sotta
