#include "sotta/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sotta/errors.hpp"

namespace sotta {

void NetworkSpec::validate() const {
  if (input_dim == 0) throw ContractError("network input_dim must be positive");
  if (classes < 2) throw ContractError("network needs at least two classes");
  for (auto w : hidden)
    if (w == 0) throw ContractError("hidden widths must be positive");
  if (!(bn_delta >= 0.0)) throw ContractError("bn_delta must be non-negative");
}

std::string Network::weight_name(std::size_t layer) { return "hidden" + std::to_string(layer) + ".weight"; }
std::string Network::gamma_name(std::size_t layer) { return "bn" + std::to_string(layer) + ".gamma"; }
std::string Network::beta_name(std::size_t layer) { return "bn" + std::to_string(layer) + ".beta"; }

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t fan_in = spec_.input_dim;
  for (std::size_t i = 0; i < spec_.hidden.size(); ++i) {
    const std::size_t w = spec_.hidden[i];
    params_.add(weight_name(i), Tensor({fan_in, w}), false);
    params_.add(gamma_name(i), Tensor::filled({w}, 1.0), true);
    params_.add(beta_name(i), Tensor({w}), true);
    running_.push_back(BnStats{Tensor({w}), Tensor::filled({w}, 1.0)});
    fan_in = w;
  }
  params_.add(head_weight_name(), Tensor({fan_in, spec_.classes}), false);
  params_.add(head_bias_name(), Tensor({spec_.classes}), false);
  source_stats_ = FeatureStats{Tensor({spec_.input_dim}), Tensor::filled({spec_.input_dim}, 1.0)};
}

BnLayerState Network::bn_state(std::size_t layer) const {
  if (layer >= bn_layers()) throw ContractError("bn_state: layer out of range");
  return BnLayerState{params_.value(gamma_name(layer)), params_.value(beta_name(layer)), running_[layer].mean,
                      running_[layer].var};
}

Network init_network(const NetworkSpec& spec, std::uint64_t seed) {
  Network net(spec);
  std::mt19937_64 rng(seed);
  auto glorot = [&](const std::string& name) {
    Tensor& w = net.params().value(name);
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : w.data()) v = dist(rng);
  };
  for (std::size_t i = 0; i < net.bn_layers(); ++i) glorot(Network::weight_name(i));
  glorot(Network::head_weight_name());
  return net;
}

ForwardPass forward(const Network& net, const Tensor& batch, const ForwardOptions& options) {
  const NetworkSpec& spec = net.spec();
  if (batch.rank() != 2 || batch.cols() != spec.input_dim) {
    throw DimensionError("forward: expected batch of width " + std::to_string(spec.input_dim) + ", got " +
                         shape_to_string(batch.shape()));
  }
  if (batch.rows() == 0) throw ContractError("forward: empty batch");
  const ParamSet& params = options.params_override ? *options.params_override : net.params();

  ForwardPass pass;
  auto tape = std::make_unique<Tape>();
  auto bind = [&](const std::string& name) {
    const Param& p = params.at(name);
    return tape->param(name, p.value, options.record_grads && p.trainable);
  };

  Var h = options.input_grad ? tape->input(batch) : tape->constant(batch);
  pass.input_var = h;
  for (std::size_t i = 0; i < net.bn_layers(); ++i) {
    Var z = matmul(h, bind(Network::weight_name(i)));
    Var gamma = bind(Network::gamma_name(i));
    Var beta = bind(Network::beta_name(i));
    BnStats stats;
    if (options.mode == NormMode::kBatch) {
      z = batch_norm(z, gamma, beta, spec.bn_delta, &stats.mean, &stats.var);
    } else {
      column_moments(z.value(), stats.mean, stats.var);
      const BnStats& run = net.running_stats()[i];
      z = normalize_running(z, run.mean, run.var, spec.bn_delta, gamma, beta);
    }
    pass.bn_batch_stats.push_back(std::move(stats));
    h = relu(z);
  }
  Var logits = add_bias(matmul(h, bind(Network::head_weight_name())), bind(Network::head_bias_name()));
  pass.logits = logits.value();
  if (options.record_grads || options.input_grad) {
    pass.logits_var = logits;
    pass.tape = std::move(tape);
  }
  return pass;
}

void ema_update(Network& net, const std::vector<BnStats>& batch_stats, double momentum) {
  if (!(momentum >= 0.0 && momentum <= 1.0)) {
    throw ContractError("ema_update: momentum " + std::to_string(momentum) + " outside [0, 1]");
  }
  auto& running = net.running_stats();
  if (batch_stats.size() != running.size()) throw DimensionError("ema_update: layer count mismatch");
  for (std::size_t i = 0; i < running.size(); ++i) {
    if (batch_stats[i].mean.size() != running[i].mean.size() || batch_stats[i].var.size() != running[i].var.size()) {
      throw DimensionError("ema_update: width mismatch in layer " + std::to_string(i));
    }
  }
  const double keep = 1.0 - momentum;
  for (std::size_t i = 0; i < running.size(); ++i) {
    for (std::size_t c = 0; c < running[i].mean.size(); ++c) {
      running[i].mean[c] = keep * running[i].mean[c] + momentum * batch_stats[i].mean[c];
      running[i].var[c] = std::max(0.0, keep * running[i].var[c] + momentum * batch_stats[i].var[c]);
    }
  }
}

Prediction prediction_from_logits(std::span<const double> logits) {
  if (logits.size() < 2) throw ContractError("prediction needs at least two classes");
  std::size_t best = 0;
  for (std::size_t k = 1; k < logits.size(); ++k)
    if (logits[k] > logits[best]) best = k;
  double z = 0.0;
  for (double v : logits) z += std::exp(v - logits[best]);
  return Prediction{static_cast<int>(best), 1.0 / z};
}

Prediction predict_with_confidence(const Network& net, const Tensor& x) {
  if (x.rows() != 1) throw ContractError("predict_with_confidence expects a single sample");
  const Tensor row = x.rank() == 2 ? x : x.reshaped({1, x.size()});
  ForwardPass pass = forward(net, row);
  return prediction_from_logits(pass.logits.row(0));
}

double accuracy(const Network& net, const Tensor& features, const std::vector<int>& labels) {
  if (labels.empty()) return 0.0;
  ForwardPass pass = forward(net, features);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < labels.size(); ++r)
    if (prediction_from_logits(pass.logits.row(r)).label == labels[r]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

TrainingLog pretrain_source(Network& net, const LabeledDataset& train, const PretrainConfig& config,
                            const LabeledDataset* holdout) {
  if (train.size() == 0) throw ContractError("pretrain_source: empty training set");
  if (train.dim() != net.spec().input_dim) throw DimensionError("pretrain_source: feature width mismatch");
  for (int y : train.labels)
    if (y < 0 || static_cast<std::size_t>(y) >= net.spec().classes)
      throw ContractError("pretrain_source: label out of range");

  net.set_source_stats(train.stats);
  const Tensor x = normalize_with(train.features, train.stats);
  const std::size_t n = train.size();
  const std::size_t bs = std::max<std::size_t>(2, config.batch_size);

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  TrainingLog log;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + 2 <= n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      if (end - start < 2) break;
      Tensor xb({end - start, x.cols()});
      std::vector<int> yb;
      for (std::size_t i = start; i < end; ++i) {
        auto src = x.row(order[i]);
        std::copy(src.begin(), src.end(), xb.row(i - start).begin());
        yb.push_back(train.labels[order[i]]);
      }
      const ParamSet all = net.params().all_trainable();
      ForwardOptions opts;
      opts.record_grads = true;
      opts.mode = NormMode::kBatch;
      opts.params_override = &all;
      ForwardPass pass = forward(net, xb, opts);
      Var loss = cross_entropy(pass.logits_var, yb);
      loss_sum += loss.value().item();
      ++batches;
      const GradMap grads = backward(*pass.tape, loss, all);
      for (const auto& [name, g] : grads) {
        Tensor& p = net.params().value(name);
        for (std::size_t j = 0; j < p.size(); ++j) p[j] -= config.lr * g[j];
      }
      ema_update(net, pass.bn_batch_stats, config.bn_momentum);
    }
    log.epoch_loss.push_back(batches ? loss_sum / static_cast<double>(batches) : 0.0);
  }
  log.train_accuracy = accuracy(net, x, train.labels);
  if (holdout && holdout->size() > 0) {
    log.holdout_accuracy = accuracy(net, normalize_with(holdout->features, train.stats), holdout->labels);
  }
  return log;
}

}  // namespace sotta
