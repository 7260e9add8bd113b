#include "sotta/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "sotta/autodiff.hpp"
#include "sotta/errors.hpp"

namespace sotta {

FeatureStats compute_feature_stats(const Tensor& features) {
  FeatureStats stats;
  Tensor var;
  column_moments(features, stats.mean, var);
  stats.std = Tensor(var.shape());
  for (std::size_t c = 0; c < var.size(); ++c) stats.std[c] = std::max(kStdFloor, std::sqrt(var[c]));
  return stats;
}

Tensor normalize_with(const Tensor& features, const FeatureStats& stats) {
  if (features.cols() != stats.mean.size() || features.cols() != stats.std.size()) {
    throw DimensionError("normalize_with: feature width " + std::to_string(features.cols()) +
                         " does not match statistics of width " + std::to_string(stats.mean.size()));
  }
  Tensor out = features;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c)
      out(r, c) = (out(r, c) - stats.mean[c]) / std::max(kStdFloor, stats.std[c]);
  return out;
}

Tensor denormalize_with(const Tensor& features, const FeatureStats& stats) {
  if (features.cols() != stats.mean.size()) throw DimensionError("denormalize_with: width mismatch");
  Tensor out = features;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c)
      out(r, c) = out(r, c) * std::max(kStdFloor, stats.std[c]) + stats.mean[c];
  return out;
}

LabeledDataset make_dataset(Tensor features, std::vector<int> labels) {
  if (features.rank() != 2 || features.rows() != labels.size()) {
    throw ContractError("dataset has " + std::to_string(labels.size()) + " labels for features of shape " +
                        shape_to_string(features.shape()));
  }
  LabeledDataset ds;
  if (!labels.empty()) ds.stats = compute_feature_stats(features);
  ds.features = std::move(features);
  ds.labels = std::move(labels);
  return ds;
}

}  // namespace sotta
