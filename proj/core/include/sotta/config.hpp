#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sotta/adapters.hpp"
#include "sotta/network.hpp"
#include "sotta/stream.hpp"

namespace sotta {

/// Bad configuration text or value. `line` is 0 when the problem is not tied
/// to one line (cross-field checks, command-line overrides).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, std::size_t line, const std::string& what);
  const std::string& key() const { return key_; }
  std::size_t line() const { return line_; }

 private:
  std::string key_;
  std::size_t line_;
};

/// Everything one run needs, flattened under dotted keys:
///
///   seed                       master seed (world, pretraining)
///   bench.*                    classes dim center_scale sigma train_per_class
///                              test_per_class shift_strength near_classes corner_scale
///   net.hidden, net.bn_delta   (input width and classes follow bench.*)
///   pretrain.*                 epochs lr batch_size bn_momentum
///   method                     method token, see parse_method
///   adapt.*                    c0 m t0 n_mem rho lr grad_floor
///   scenario.*                 name noisy_ratio noisy_count
///   attack.*                   epsilon alpha steps benign_per_batch
struct RunConfig {
  std::uint64_t seed = 0;
  BenchmarkConfig bench;
  std::vector<std::size_t> hidden = {64, 64};
  double bn_delta = 1e-5;
  PretrainConfig pretrain;
  std::string method = "sotta";
  /// Unset means default_c0(bench.classes).
  std::optional<double> c0;
  double momentum = 0.2;
  std::size_t t0 = 64;
  std::size_t capacity = 64;
  EsmConfig esm;
  ScenarioConfig scenario;

  NetworkSpec network_spec() const;
  double resolved_c0() const { return c0 ? *c0 : default_c0(bench.classes); }
  /// Method configuration for `token` with this config's hyperparameters.
  MethodConfig method_config(const std::string& token) const;
  MethodConfig method_config() const { return method_config(method); }
  /// Cross-field checks; throws ConfigError.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// `key = value` lines; '#' starts a comment; blank lines are ignored and
/// later keys override earlier ones. Errors carry the key and line number.
RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);

/// Sets one key from its textual value, as a config line would.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value, std::size_t line = 0);

/// Every key with its current value, in a form parse_config reads back to an
/// equal config.
std::string serialize_config(const RunConfig& config);

std::vector<std::string> config_keys();

}  // namespace sotta
