#pragma once

#include <vector>

#include "sotta/tensor.hpp"

namespace sotta {

/// Per-feature location and scale of a dataset.
struct FeatureStats {
  Tensor mean;
  Tensor std;
  bool operator==(const FeatureStats&) const = default;
};

inline constexpr double kStdFloor = 1e-6;

/// Column means and population standard deviations floored at kStdFloor.
FeatureStats compute_feature_stats(const Tensor& features);

/// (x - mean) / std per feature.
Tensor normalize_with(const Tensor& features, const FeatureStats& stats);
/// Inverse of normalize_with.
Tensor denormalize_with(const Tensor& features, const FeatureStats& stats);

struct LabeledDataset {
  Tensor features;  // n x d
  std::vector<int> labels;
  FeatureStats stats;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
};

/// Builds a dataset and fills its feature statistics. Throws ContractError
/// when the row and label counts disagree.
LabeledDataset make_dataset(Tensor features, std::vector<int> labels);

}  // namespace sotta
