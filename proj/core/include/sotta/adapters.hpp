#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sotta/esm.hpp"
#include "sotta/network.hpp"
#include "sotta/stream.hpp"

namespace sotta {

enum class Method { kSource, kBnStats, kEm, kSotta };

/// Confidence threshold by class count: 0.99 up to 10 classes, 0.66 up to
/// 100, 0.33 beyond.
double default_c0(std::size_t classes);

struct MethodConfig {
  Method method = Method::kSotta;
  // Mechanism flags; only meaningful for the entropy-based methods.
  bool hc_enabled = true;   // confidence filter
  bool uc_enabled = true;   // class-balanced eviction (FIFO when off)
  bool esm_enabled = true;  // sharpness-aware step (plain entropy step when off)
  double c0 = 0.99;
  double momentum = 0.2;
  std::size_t t0 = 64;
  std::size_t capacity = 64;
  EsmConfig esm;

  /// Throws ContractError unless t0 >= 1, capacity >= 1, c0 in [0, 1),
  /// momentum in [0, 1] and the optimizer settings are valid.
  void validate() const;
  /// Admission threshold actually applied: c0, or 0 with the filter off.
  double threshold() const { return hc_enabled ? c0 : 0.0; }
  bool adapts_with_entropy() const { return method == Method::kEm || method == Method::kSotta; }
  bool operator==(const MethodConfig&) const = default;
};

/// Method tokens: source, bn_stats, em, sotta, and ablation:<flags> where
/// flags is "none" or a '+'-joined subset of hc, uc, esm. Ablations with every
/// flag on or off resolve to sotta and em. Hyperparameters other than the
/// flags are taken from `base`. Throws ContractError on an unknown token.
MethodConfig parse_method(const std::string& token, const MethodConfig& base);
/// Canonical token for a configuration (inverse of parse_method).
std::string method_token(const MethodConfig& config);

struct EventLog {
  std::size_t step = 0;  // samples consumed when the event fired
  double cumulative_accuracy = 0.0;
  bool skipped = false;
  double loss_before = 0.0;
  double loss_after = 0.0;
  double grad_norm = 0.0;
  /// Mean per-sample entropy-gradient norm of the window's noisy samples
  /// before the update; -1 when the window held none.
  double noisy_grad_norm = -1.0;
  std::size_t memory_size = 0;
};

struct StreamResult {
  double benign_accuracy = 0.0;
  std::size_t benign_seen = 0;
  std::size_t insertions = 0;
  std::size_t noisy_insertions = 0;
  std::size_t skipped_events = 0;
  double final_loss = 0.0;
  /// Mean of the logged noisy-window gradient norms (windows without noisy
  /// samples excluded); 0 when there were none.
  double mean_noisy_grad_norm = 0.0;
  std::vector<EventLog> events;
  std::uint32_t fingerprint = 0;  // checkpoint CRC of the final model
  Network final_network{NetworkSpec{}};
};

/// Online pass over the stream: each sample is predicted with the current
/// model, then handed to the method, and every t0 samples the method adapts.
/// The input network is not modified. Throws ContractError on an empty stream.
StreamResult run_stream(const Network& net, const std::vector<StreamSample>& stream, const MethodConfig& config,
                        std::uint64_t seed);

/// Mean per-sample norm of the entropy gradient with respect to the
/// trainable parameters under running statistics.
double mean_entropy_grad_norm(const Network& net, const std::vector<Tensor>& samples);

struct ResultKey {
  std::string scenario;
  std::string method;
  auto operator<=>(const ResultKey&) const = default;
};

struct LabeledResult {
  ResultKey key;
  double benign_accuracy = 0.0;
};

struct SummaryRow {
  ResultKey key;
  double mean = 0.0;
  double std = 0.0;  // population
  std::size_t count = 0;
};

/// Mean and population standard deviation of benign accuracy per
/// (scenario, method), ordered by key. Input order does not matter.
std::vector<SummaryRow> evaluate_result(const std::vector<LabeledResult>& results);

}  // namespace sotta
