#pragma once

#include <cstdint>

#include "sotta/network.hpp"
#include "sotta/params.hpp"

namespace sotta {

/// Adam moments for the trainable parameters. State persists across calls so
/// bias correction only warms up once per run.
struct AdamState {
  GradMap first_moment;
  GradMap second_moment;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) for every entry of
/// `grads`. Moment buffers are created lazily with the gradient's shape.
void adam_update(ParamSet& params, const GradMap& grads, AdamState& state, double lr);

struct EsmConfig {
  double rho = 0.05;
  double lr = 0.001;
  /// Below this global gradient norm the perturbation is skipped.
  double grad_floor = 1e-12;
  bool esm_enabled = true;

  void validate() const;
  bool operator==(const EsmConfig&) const = default;
};

/// rho * g / ||g||_2 with the norm taken jointly over every tensor in the
/// map; all zeros when ||g||_2 < grad_floor.
GradMap epsilon_hat(const GradMap& grads, double rho, double grad_floor = 1e-12);

struct StepReport {
  double loss = 0.0;            // entropy at theta
  double perturbed_loss = 0.0;  // entropy at theta + eps_hat (equal to loss for em_step)
  double grad_norm = 0.0;       // norm of the gradient that drove the update
};

/// Two-pass entropy-sharpness step: gradient at theta, perturb by eps_hat,
/// gradient at the perturbed point, then an Adam step of the original
/// parameters with that gradient. The network's own parameters are never
/// perturbed in place; running moments are untouched. Throws NoSamplesError
/// on an empty batch.
StepReport esm_step(Network& net, const Tensor& batch, const EsmConfig& config, AdamState& adam);

/// Plain entropy-minimization step with the gradient at theta.
StepReport em_step(Network& net, const Tensor& batch, const EsmConfig& config, AdamState& adam);

/// Mean entropy of the batch and its gradient for the trainable parameters,
/// evaluated at `params` (or the network's own parameters).
struct EntropyGrad {
  double loss = 0.0;
  GradMap grads;
};
EntropyGrad entropy_gradient(const Network& net, const Tensor& batch, const ParamSet* params = nullptr);

}  // namespace sotta
