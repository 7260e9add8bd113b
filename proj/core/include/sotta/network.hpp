#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "sotta/autodiff.hpp"
#include "sotta/dataset.hpp"
#include "sotta/params.hpp"
#include "sotta/tensor.hpp"

namespace sotta {

struct NetworkSpec {
  std::size_t input_dim = 16;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t classes = 4;
  double bn_delta = 1e-5;

  /// Throws ContractError on a zero dimension or fewer than two classes.
  void validate() const;
  bool operator==(const NetworkSpec&) const = default;
};

/// Batch statistics of one normalization layer (population variance).
struct BnStats {
  Tensor mean;
  Tensor var;
};

/// View of one normalization layer: affine parameters plus running moments.
struct BnLayerState {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
};

/// MLP: [affine -> batch norm -> relu] per hidden width, then a linear head.
///
/// Hidden affines carry no bias because the normalization shift subsumes it.
/// The parameter set marks exactly the normalization gamma/beta trainable;
/// everything else is frozen for test-time adaptation.
class Network {
 public:
  explicit Network(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  std::size_t bn_layers() const { return spec_.hidden.size(); }

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  std::vector<BnStats>& running_stats() { return running_; }
  const std::vector<BnStats>& running_stats() const { return running_; }
  BnLayerState bn_state(std::size_t layer) const;

  /// Standardization statistics of the source training features.
  const FeatureStats& source_stats() const { return source_stats_; }
  void set_source_stats(FeatureStats stats) { source_stats_ = std::move(stats); }

  static std::string weight_name(std::size_t layer);
  static std::string gamma_name(std::size_t layer);
  static std::string beta_name(std::size_t layer);
  static std::string head_weight_name() { return "head.weight"; }
  static std::string head_bias_name() { return "head.bias"; }

 private:
  NetworkSpec spec_;
  ParamSet params_;
  std::vector<BnStats> running_;
  FeatureStats source_stats_;
};

/// Glorot-uniform weights, gamma = 1, beta = 0, running mean 0 and var 1.
Network init_network(const NetworkSpec& spec, std::uint64_t seed);

enum class NormMode {
  kRunning,  // normalize with the running moments (test time)
  kBatch,    // normalize with the batch's own moments, gradients through them
};

struct ForwardOptions {
  bool record_grads = false;
  NormMode mode = NormMode::kRunning;
  /// Track a gradient for the input rows (adversarial attacks).
  bool input_grad = false;
  /// Evaluate with these parameter values instead of the network's own.
  const ParamSet* params_override = nullptr;
};

struct ForwardPass {
  Tensor logits;
  /// Moments of each normalization layer's input over this batch.
  std::vector<BnStats> bn_batch_stats;
  // Populated when record_grads is set.
  std::unique_ptr<Tape> tape;
  Var logits_var;
  Var input_var;
};

ForwardPass forward(const Network& net, const Tensor& batch, const ForwardOptions& options = {});
inline ForwardPass forward(const Network& net, const Tensor& batch, bool record_grads) {
  ForwardOptions opts;
  opts.record_grads = record_grads;
  return forward(net, batch, opts);
}

/// running <- (1 - m) running + m batch for every layer's mean and variance.
void ema_update(Network& net, const std::vector<BnStats>& batch_stats, double momentum);

struct Prediction {
  int label = 0;
  double confidence = 0.0;
};

/// Argmax (lowest index on ties) and maximum softmax probability of one row.
Prediction prediction_from_logits(std::span<const double> logits);
Prediction predict_with_confidence(const Network& net, const Tensor& x);

struct PretrainConfig {
  std::size_t epochs = 30;
  double lr = 0.05;
  std::size_t batch_size = 64;
  double bn_momentum = 0.1;
  std::uint64_t seed = 0;
  bool operator==(const PretrainConfig&) const = default;
};

struct TrainingLog {
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
  /// Accuracy on the clean holdout, or -1 when none was given.
  double holdout_accuracy = -1.0;
};

/// Cross-entropy minibatch SGD over all parameters with batch-statistics
/// normalization and running-moment tracking. Records the training set's
/// feature statistics on the network and trains on standardized features.
TrainingLog pretrain_source(Network& net, const LabeledDataset& train, const PretrainConfig& config,
                            const LabeledDataset* holdout = nullptr);

/// Accuracy of running-statistics predictions on features that are already
/// in the network's input space.
double accuracy(const Network& net, const Tensor& features, const std::vector<int>& labels);

}  // namespace sotta
