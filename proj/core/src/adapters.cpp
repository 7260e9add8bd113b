#include "sotta/adapters.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "sotta/checkpoint.hpp"
#include "sotta/errors.hpp"
#include "sotta/memory_bank.hpp"
#include "sotta/seeds.hpp"

namespace sotta {

double default_c0(std::size_t classes) {
  if (classes <= 10) return 0.99;
  if (classes <= 100) return 0.66;
  return 0.33;
}

void MethodConfig::validate() const {
  if (t0 < 1) throw ContractError("method: t0 must be >= 1");
  if (capacity < 1) throw ContractError("method: memory capacity must be >= 1");
  if (!(c0 >= 0.0 && c0 < 1.0)) throw ContractError("method: c0 must lie in [0, 1)");
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw ContractError("method: momentum must lie in [0, 1]");
  esm.validate();
}

namespace {

void set_flags(MethodConfig& cfg, bool hc, bool uc, bool esm) {
  cfg.hc_enabled = hc;
  cfg.uc_enabled = uc;
  cfg.esm_enabled = esm;
  cfg.method = (hc || uc || esm) ? Method::kSotta : Method::kEm;
}

}  // namespace

MethodConfig parse_method(const std::string& token, const MethodConfig& base) {
  MethodConfig cfg = base;
  if (token == "source") {
    cfg.method = Method::kSource;
  } else if (token == "bn_stats") {
    cfg.method = Method::kBnStats;
  } else if (token == "em") {
    set_flags(cfg, false, false, false);
  } else if (token == "sotta") {
    set_flags(cfg, true, true, true);
  } else if (token.starts_with("ablation:")) {
    const std::string rest = token.substr(9);
    bool hc = false, uc = false, esm = false;
    if (rest != "none") {
      std::size_t pos = 0;
      while (pos <= rest.size()) {
        const std::size_t next = std::min(rest.find('+', pos), rest.size());
        const std::string part = rest.substr(pos, next - pos);
        bool* flag = part == "hc" ? &hc : part == "uc" ? &uc : part == "esm" ? &esm : nullptr;
        if (!flag || *flag) throw ContractError("unknown or repeated ablation flag '" + part + "' in " + token);
        *flag = true;
        pos = next + 1;
      }
    }
    set_flags(cfg, hc, uc, esm);
  } else {
    throw ContractError("unknown method '" + token + "'");
  }
  return cfg;
}

std::string method_token(const MethodConfig& config) {
  switch (config.method) {
    case Method::kSource:
      return "source";
    case Method::kBnStats:
      return "bn_stats";
    case Method::kEm:
    case Method::kSotta:
      break;
  }
  const bool hc = config.hc_enabled, uc = config.uc_enabled, esm = config.esm_enabled;
  if (hc && uc && esm) return "sotta";
  if (!hc && !uc && !esm) return "em";
  std::string flags;
  for (auto [on, name] : {std::pair{hc, "hc"}, std::pair{uc, "uc"}, std::pair{esm, "esm"}}) {
    if (!on) continue;
    if (!flags.empty()) flags += '+';
    flags += name;
  }
  return "ablation:" + flags;
}

double mean_entropy_grad_norm(const Network& net, const std::vector<Tensor>& samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const Tensor& x : samples) total += global_norm(entropy_gradient(net, x).grads);
  return total / static_cast<double>(samples.size());
}

namespace {

double batch_entropy(const Network& net, const Tensor& batch) { return entropy_gradient(net, batch).loss; }

}  // namespace

StreamResult run_stream(const Network& net, const std::vector<StreamSample>& stream, const MethodConfig& config,
                        std::uint64_t seed) {
  config.validate();
  if (stream.empty()) throw ContractError("run_stream: empty stream");

  const RngTree tree{seed};
  Network model = net;
  MemoryBank bank(config.capacity, model.spec().classes, tree.derive("memory-eviction"),
                  config.uc_enabled ? MemoryPolicy::kUniformClass : MemoryPolicy::kFifo);
  AdamState adam;
  EsmConfig esm = config.esm;
  esm.esm_enabled = config.esm_enabled;
  const bool entropy_method = config.adapts_with_entropy();

  StreamResult result;
  std::size_t correct = 0;
  std::vector<Tensor> window;        // raw inputs since the last event (BN-stats baseline)
  std::vector<Tensor> noisy_window;  // evaluator-side diagnostic only
  double noisy_norm_sum = 0.0;
  std::size_t noisy_norm_windows = 0;

  auto cumulative = [&] {
    return result.benign_seen ? static_cast<double>(correct) / static_cast<double>(result.benign_seen) : 0.0;
  };

  for (std::size_t t = 0; t < stream.size(); ++t) {
    const StreamSample& sample = stream[t];
    const Tensor& x = sample.features();
    const Provenance& truth = StreamEvaluator::provenance(sample);

    const Prediction pred = predict_with_confidence(model, x);
    if (truth.is_benign) {
      ++result.benign_seen;
      if (pred.label == truth.true_label) ++correct;
    } else if (entropy_method) {
      noisy_window.push_back(x);
    }

    if (entropy_method) {
      const InsertOutcome out = bank.maybe_insert(x, pred.label, pred.confidence, config.threshold());
      if (out.kind != InsertKind::kRejected) {
        ++result.insertions;
        if (!truth.is_benign) ++result.noisy_insertions;
      }
    } else if (config.method == Method::kBnStats) {
      window.push_back(x);
    }

    if ((t + 1) % config.t0 != 0) continue;

    EventLog log;
    log.step = t + 1;
    if (entropy_method && !noisy_window.empty()) {
      log.noisy_grad_norm = mean_entropy_grad_norm(model, noisy_window);
      noisy_norm_sum += log.noisy_grad_norm;
      ++noisy_norm_windows;
    }
    noisy_window.clear();

    if (entropy_method) {
      log.memory_size = bank.size();
      const std::optional<Tensor> batch = bank.as_batch();
      if (!batch) {
        log.skipped = true;
        ++result.skipped_events;
      } else {
        ema_update(model, forward(model, *batch).bn_batch_stats, config.momentum);
        const StepReport rep = config.esm_enabled ? esm_step(model, *batch, esm, adam) : em_step(model, *batch, esm, adam);
        log.loss_before = rep.loss;
        log.grad_norm = rep.grad_norm;
        log.loss_after = batch_entropy(model, *batch);
        result.final_loss = log.loss_after;
      }
    } else if (config.method == Method::kBnStats) {
      const Tensor batch = stack_rows(window);
      window.clear();
      log.loss_before = batch_entropy(model, batch);
      ema_update(model, forward(model, batch).bn_batch_stats, config.momentum);
      log.loss_after = batch_entropy(model, batch);
      result.final_loss = log.loss_after;
    }
    log.cumulative_accuracy = cumulative();
    result.events.push_back(log);
  }

  // Closing row so the log always ends at the stream's final accuracy.
  if (stream.size() % config.t0 != 0) {
    EventLog tail;
    tail.step = stream.size();
    tail.cumulative_accuracy = cumulative();
    tail.memory_size = bank.size();
    tail.loss_before = tail.loss_after = result.final_loss;
    result.events.push_back(tail);
  }

  result.benign_accuracy = cumulative();
  result.mean_noisy_grad_norm = noisy_norm_windows ? noisy_norm_sum / static_cast<double>(noisy_norm_windows) : 0.0;
  result.fingerprint = network_fingerprint(model);
  result.final_network = std::move(model);
  return result;
}

std::vector<SummaryRow> evaluate_result(const std::vector<LabeledResult>& results) {
  if (results.empty()) throw ContractError("evaluate_result: no results");
  std::map<ResultKey, std::vector<double>> groups;
  for (const LabeledResult& r : results) groups[r.key].push_back(r.benign_accuracy);
  std::vector<SummaryRow> rows;
  for (auto& [key, values] : groups) {
    // Sorting first makes the sums independent of input order.
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    rows.push_back(SummaryRow{key, mean, std::sqrt(var / n), values.size()});
  }
  return rows;
}

}  // namespace sotta
