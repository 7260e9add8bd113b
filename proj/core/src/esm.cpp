#include "sotta/esm.hpp"

#include <cmath>

#include "sotta/errors.hpp"

namespace sotta {

void adam_update(ParamSet& params, const GradMap& grads, AdamState& state, double lr) {
  for (const auto& [name, g] : grads) {
    if (params.value(name).size() != g.size()) throw DimensionError("adam_update: shape mismatch for '" + name + "'");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (const auto& [name, g] : grads) {
    Tensor& m = state.first_moment.try_emplace(name, g.shape()).first->second;
    Tensor& v = state.second_moment.try_emplace(name, g.shape()).first->second;
    Tensor& theta = params.value(name);
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      theta[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

void EsmConfig::validate() const {
  if (!(rho >= 0.0)) throw ContractError("rho must be non-negative");
  if (!(lr >= 0.0)) throw ContractError("learning rate must be non-negative");
  if (!(grad_floor >= 0.0)) throw ContractError("gradient floor must be non-negative");
}

GradMap epsilon_hat(const GradMap& grads, double rho, double grad_floor) {
  if (!(rho >= 0.0)) throw ContractError("epsilon_hat: rho must be non-negative");
  const double norm = global_norm(grads);
  GradMap eps;
  const bool degenerate = !(norm >= grad_floor) || norm == 0.0;
  const double factor = degenerate ? 0.0 : rho / norm;
  for (const auto& [name, g] : grads) {
    Tensor e(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) e[i] = factor * g[i];
    eps.emplace(name, std::move(e));
  }
  return eps;
}

EntropyGrad entropy_gradient(const Network& net, const Tensor& batch, const ParamSet* params) {
  if (batch.rows() == 0) throw NoSamplesError();
  ForwardOptions opts;
  opts.record_grads = true;
  opts.params_override = params;
  ForwardPass pass = forward(net, batch, opts);
  Var loss = mean_entropy(pass.logits_var);
  EntropyGrad out;
  out.loss = loss.value().item();
  out.grads = backward(*pass.tape, loss, params ? *params : net.params());
  return out;
}

StepReport esm_step(Network& net, const Tensor& batch, const EsmConfig& config, AdamState& adam) {
  config.validate();
  if (batch.rank() != 2 || batch.rows() == 0) throw NoSamplesError();

  const EntropyGrad at_theta = entropy_gradient(net, batch);
  const GradMap eps = epsilon_hat(at_theta.grads, config.rho, config.grad_floor);

  ParamSet perturbed = net.params();
  for (const auto& [name, e] : eps) {
    Tensor& p = perturbed.value(name);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += e[i];
  }
  const EntropyGrad at_perturbed = entropy_gradient(net, batch, &perturbed);

  adam_update(net.params(), at_perturbed.grads, adam, config.lr);
  return StepReport{at_theta.loss, at_perturbed.loss, global_norm(at_perturbed.grads)};
}

StepReport em_step(Network& net, const Tensor& batch, const EsmConfig& config, AdamState& adam) {
  config.validate();
  if (batch.rank() != 2 || batch.rows() == 0) throw NoSamplesError();
  const EntropyGrad at_theta = entropy_gradient(net, batch);
  adam_update(net.params(), at_theta.grads, adam, config.lr);
  return StepReport{at_theta.loss, at_theta.loss, global_norm(at_theta.grads)};
}

}  // namespace sotta
