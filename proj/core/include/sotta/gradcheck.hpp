#pragma once

#include <cstdint>
#include <functional>

#include "sotta/autodiff.hpp"
#include "sotta/params.hpp"

namespace sotta {

/// A scalar function of a parameter set, built on the supplied tape. It must
/// bind parameters with Tape::param so backward() can find them.
using TapedScalarFn = std::function<Var(Tape&, const ParamSet&)>;

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t entries = 0;
};

/// Largest |analytic - central difference| / max(1e-8, |central difference|)
/// over every trainable entry. `analytic_override`, when set, replaces the
/// tape gradient (used to test the checker itself).
GradCheckResult grad_check(const TapedScalarFn& f, const ParamSet& params, double h,
                           const std::function<GradMap(GradMap)>& analytic_override = {});

double grad_check_max_rel_err(const TapedScalarFn& f, const ParamSet& params, double h);

/// Extended-precision evaluation of the same scalar function with one entry
/// shifted by `delta`, used as the central-difference side of the check.
struct Perturbation {
  const std::string* name = nullptr;
  std::size_t index = 0;
  long double delta = 0.0L;
};
using ReferenceFn = std::function<long double(const ParamSet&, const Perturbation&)>;

/// As grad_check, but the central differences come from `reference`, which
/// must implement the objective independently of the tape.
GradCheckResult grad_check_reference(const TapedScalarFn& f, const ReferenceFn& reference, const ParamSet& params,
                                     double h);

/// Random MLP-with-batch-norm entropy objective used by the self-check: depth
/// in [1, 3], widths in [4, 32], all parameters trainable.
struct RandomNetProblem {
  ParamSet params;
  Tensor inputs;
  std::size_t hidden_layers = 0;
  bool batch_stats = false;
  TapedScalarFn objective() const;
  /// Independent long-double forward pass of the same objective.
  ReferenceFn reference() const;
};

RandomNetProblem make_random_net_problem(std::uint64_t seed);

struct GradCheckSuiteReport {
  std::size_t networks = 0;
  double worst_rel_err = 0.0;
};

/// Runs grad_check_reference over `count` random networks seeded from `seed`.
GradCheckSuiteReport run_grad_check_suite(std::size_t count, std::uint64_t seed, double h = 1e-5);

}  // namespace sotta
