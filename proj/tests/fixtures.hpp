#pragma once

#include <random>

#include "sotta/sweep.hpp"

namespace sotta::testing {

// Source model of the default config, trained once per test binary.
inline const Network& default_source_model() {
  static const Network net = pretrain_from_config(RunConfig{});
  return net;
}

inline Tensor normal_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Tensor t({rows, cols});
  for (double& v : t.data()) v = n(rng);
  return t;
}

}  // namespace sotta::testing
