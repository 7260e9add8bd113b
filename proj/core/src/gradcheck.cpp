#include "sotta/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "sotta/errors.hpp"

namespace sotta {

namespace {

double evaluate(const TapedScalarFn& f, const ParamSet& params) {
  Tape tape;
  return f(tape, params).value().item();
}

}  // namespace

GradCheckResult grad_check(const TapedScalarFn& f, const ParamSet& params, double h,
                           const std::function<GradMap(GradMap)>& analytic_override) {
  if (!(h > 0.0)) throw ContractError("grad_check: step must be positive");
  Tape tape;
  Var loss = f(tape, params);
  GradMap analytic = backward(tape, loss, params);
  if (analytic_override) analytic = analytic_override(std::move(analytic));

  GradCheckResult result;
  ParamSet probe = params;
  for (const auto& [name, p] : params) {
    if (!p.trainable) continue;
    const Tensor& g = analytic.at(name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double original = p.value[i];
      probe.value(name)[i] = original + h;
      const double up = evaluate(f, probe);
      probe.value(name)[i] = original - h;
      const double down = evaluate(f, probe);
      probe.value(name)[i] = original;
      const double numeric = (up - down) / (2.0 * h);
      const double err = std::abs(g[i] - numeric) / std::max(1e-8, std::abs(numeric));
      result.max_rel_err = std::max(result.max_rel_err, err);
      ++result.entries;
    }
  }
  return result;
}

double grad_check_max_rel_err(const TapedScalarFn& f, const ParamSet& params, double h) {
  return grad_check(f, params, h).max_rel_err;
}

GradCheckResult grad_check_reference(const TapedScalarFn& f, const ReferenceFn& reference, const ParamSet& params,
                                     double h) {
  if (!(h > 0.0)) throw ContractError("grad_check: step must be positive");
  Tape tape;
  Var loss = f(tape, params);
  const GradMap analytic = backward(tape, loss, params);

  GradCheckResult result;
  const long double step = h;
  for (const auto& [name, p] : params) {
    if (!p.trainable) continue;
    const Tensor& g = analytic.at(name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const long double up = reference(params, Perturbation{&name, i, step});
      const long double down = reference(params, Perturbation{&name, i, -step});
      const double numeric = static_cast<double>((up - down) / (2.0L * step));
      const double err = std::abs(g[i] - numeric) / std::max(1e-8, std::abs(numeric));
      result.max_rel_err = std::max(result.max_rel_err, err);
      ++result.entries;
    }
  }
  return result;
}

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

std::string layer_name(std::size_t i, const char* field) { return "l" + std::to_string(i) + "." + field; }

// Forward pass of the self-check MLP; fills relu pre-activations when asked.
Var random_net_forward(Tape& tape, const ParamSet& params, const Tensor& inputs, std::size_t hidden_layers,
                       bool batch_stats, std::vector<Tensor>* pre_relu) {
  Var h = tape.constant(inputs);
  auto bind = [&](const std::string& name) {
    const Param& p = params.at(name);
    return tape.param(name, p.value, p.trainable);
  };
  for (std::size_t i = 0; i < hidden_layers; ++i) {
    Var z = matmul(h, bind(layer_name(i, "w")));
    Var gamma = bind(layer_name(i, "gamma"));
    Var beta = bind(layer_name(i, "beta"));
    if (batch_stats) {
      z = batch_norm(z, gamma, beta, 1e-5);
    } else {
      z = normalize_running(z, params.value(layer_name(i, "mu")), params.value(layer_name(i, "var")), 1e-5, gamma,
                            beta);
    }
    if (pre_relu) pre_relu->push_back(z.value());
    h = relu(z);
  }
  Var logits = add_bias(matmul(h, bind("head.w")), bind("head.b"));
  return mean_entropy(logits);
}

using LdRows = std::vector<std::vector<long double>>;

long double reference_forward(const ParamSet& params, const Perturbation& pert, const Tensor& inputs,
                              std::size_t hidden_layers, bool batch_stats) {
  std::map<std::string, std::vector<long double>> p;
  for (const auto& [name, param] : params) p[name].assign(param.value.data().begin(), param.value.data().end());
  if (pert.name) p.at(*pert.name).at(pert.index) += pert.delta;

  const std::size_t b = inputs.rows();
  LdRows h(b);
  for (std::size_t r = 0; r < b; ++r) h[r].assign(inputs.row(r).begin(), inputs.row(r).end());

  auto affine = [&](const std::string& w_name, const std::vector<long double>* bias) {
    const std::vector<long double>& w = p.at(w_name);
    const std::size_t in = h.front().size(), out = w.size() / in;
    LdRows z(b, std::vector<long double>(out, 0.0L));
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t c = 0; c < out; ++c) {
        long double acc = bias ? (*bias)[c] : 0.0L;
        for (std::size_t k = 0; k < in; ++k) acc += h[r][k] * w[k * out + c];
        z[r][c] = acc;
      }
    return z;
  };

  for (std::size_t i = 0; i < hidden_layers; ++i) {
    LdRows z = affine(layer_name(i, "w"), nullptr);
    const auto& gamma = p.at(layer_name(i, "gamma"));
    const auto& beta = p.at(layer_name(i, "beta"));
    const auto& mu = p.at(layer_name(i, "mu"));
    const auto& var_run = p.at(layer_name(i, "var"));
    for (std::size_t c = 0; c < gamma.size(); ++c) {
      long double mean = mu[c], var = var_run[c];
      if (batch_stats) {
        mean = 0.0L;
        var = 0.0L;
        for (std::size_t r = 0; r < b; ++r) mean += z[r][c];
        mean /= static_cast<long double>(b);
        for (std::size_t r = 0; r < b; ++r) var += (z[r][c] - mean) * (z[r][c] - mean);
        var /= static_cast<long double>(b);
      }
      const long double inv_std = 1.0L / std::sqrt(var + 1e-5L);
      for (std::size_t r = 0; r < b; ++r) {
        const long double y = gamma[c] * (z[r][c] - mean) * inv_std + beta[c];
        z[r][c] = y > 0.0L ? y : 0.0L;
      }
    }
    h = std::move(z);
  }
  const LdRows logits = affine("head.w", &p.at("head.b"));
  long double total = 0.0L;
  for (const auto& row : logits) {
    const long double mx = *std::max_element(row.begin(), row.end());
    long double z = 0.0L;
    for (long double v : row) z += std::exp(v - mx);
    const long double lse = mx + std::log(z);
    for (long double v : row) {
      const long double logp = v - lse;
      total -= std::exp(logp) * logp;
    }
  }
  return total / static_cast<long double>(b);
}

}  // namespace

ReferenceFn RandomNetProblem::reference() const {
  return [inputs = inputs, layers = hidden_layers, batch = batch_stats](const ParamSet& params,
                                                                       const Perturbation& pert) {
    return reference_forward(params, pert, inputs, layers, batch);
  };
}

TapedScalarFn RandomNetProblem::objective() const {
  return [inputs = inputs, layers = hidden_layers, batch = batch_stats](Tape& tape, const ParamSet& params) {
    return random_net_forward(tape, params, inputs, layers, batch, nullptr);
  };
}

RandomNetProblem make_random_net_problem(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> depth(1, 3);
  std::uniform_int_distribution<std::size_t> width(4, 32);
  std::uniform_int_distribution<std::size_t> batch(4, 8);
  std::uniform_int_distribution<std::size_t> classes(3, 6);

  RandomNetProblem prob;
  prob.hidden_layers = depth(rng);
  // With batch statistics in consecutive layers, shifts that the next
  // normalization cancels have exactly zero gradient and the central
  // difference only sees rounding noise, so batch mode stays single-layer.
  prob.batch_stats = prob.hidden_layers == 1 && (rng() & 1U) != 0;
  const std::size_t in_dim = width(rng);
  const std::size_t b = batch(rng);
  const std::size_t k = classes(rng);

  std::size_t fan_in = in_dim;
  for (std::size_t i = 0; i < prob.hidden_layers; ++i) {
    const std::size_t w = width(rng);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + w));
    prob.params.add(layer_name(i, "w"), random_tensor({fan_in, w}, rng, -bound, bound), true);
    prob.params.add(layer_name(i, "gamma"), random_tensor({w}, rng, 0.5, 1.5), true);
    prob.params.add(layer_name(i, "beta"), random_tensor({w}, rng, -0.5, 0.5), true);
    prob.params.add(layer_name(i, "mu"), random_tensor({w}, rng, -0.5, 0.5), false);
    prob.params.add(layer_name(i, "var"), random_tensor({w}, rng, 0.5, 2.0), false);
    fan_in = w;
  }
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + k));
  prob.params.add("head.w", random_tensor({fan_in, k}, rng, -bound, bound), true);
  prob.params.add("head.b", random_tensor({k}, rng, -0.5, 0.5), true);

  // Central differences are meaningless across a relu kink, so redraw input
  // rows until every pre-activation clears the band |z| < 1e-2. With running
  // statistics rows are independent and only offending rows are redrawn.
  prob.inputs = random_tensor({b, in_dim}, rng, -2.0, 2.0);
  std::uniform_real_distribution<double> coord(-2.0, 2.0);
  for (;;) {
    std::vector<Tensor> pre;
    Tape tape;
    random_net_forward(tape, prob.params, prob.inputs, prob.hidden_layers, prob.batch_stats, &pre);
    std::vector<bool> bad(b, false);
    bool any = false;
    for (const auto& z : pre)
      for (std::size_t r = 0; r < b; ++r)
        for (double v : z.row(r))
          if (std::abs(v) < 1e-2) bad[r] = any = true;
    if (!any) break;
    for (std::size_t r = 0; r < b; ++r)
      if (bad[r] || prob.batch_stats)
        for (double& v : prob.inputs.row(r)) v = coord(rng);
  }
  return prob;
}

GradCheckSuiteReport run_grad_check_suite(std::size_t count, std::uint64_t seed, double h) {
  GradCheckSuiteReport report;
  std::mt19937_64 seeds(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const RandomNetProblem prob = make_random_net_problem(seeds());
    const GradCheckResult r = grad_check_reference(prob.objective(), prob.reference(), prob.params, h);
    report.worst_rel_err = std::max(report.worst_rel_err, r.max_rel_err);
    ++report.networks;
  }
  return report;
}

}  // namespace sotta
