#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sotta/params.hpp"
#include "sotta/tensor.hpp"

namespace sotta {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

enum class OpKind {
  kLeaf,
  kMatMul,
  kAddBias,
  kRelu,
  kRunningNorm,
  kBatchNorm,
  kMeanEntropy,
  kCrossEntropy,
  kSum,
  kAdd,
  kScale,
};

/// Define-by-run reverse-mode tape.
///
/// Nodes are appended in evaluation order, so every record's inputs precede it.
/// backward() walks the records once in reverse and then marks the tape
/// consumed; a second call is a ContractError.
class Tape {
 public:
  struct Record {
    OpKind op = OpKind::kLeaf;
    std::vector<std::size_t> inputs;
    std::vector<Tensor> saved;
    double scalar = 0.0;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf whose gradient is tracked (e.g. inputs for an attack).
  Var input(Tensor value);
  /// Named parameter leaf. Frozen parameters are recorded as constants.
  Var param(const std::string& name, const Tensor& value, bool trainable = true);

  /// Append a computed node. Used by the op functions below.
  Var push(OpKind op, std::vector<std::size_t> inputs, Tensor value, std::vector<Tensor> saved = {},
           double scalar = 0.0);

  const Tensor& value(std::size_t id) const { return values_.at(id); }
  bool needs_grad(std::size_t id) const { return needs_grad_.at(id); }
  std::size_t size() const { return values_.size(); }
  const Record& record(std::size_t id) const { return records_.at(id); }

  /// Reverse sweep from a scalar loss. Throws ContractError on a non-scalar
  /// loss, a foreign Var, or a consumed tape.
  void backward(Var loss);
  bool consumed() const { return consumed_; }

  /// Accumulated gradient of a node after backward; zeros if unreached.
  Tensor grad(Var v) const;
  /// Gradients of every registered trainable parameter.
  GradMap param_grads() const;
  const std::map<std::string, std::size_t>& params() const { return params_; }

 private:
  void accumulate(std::size_t id, const Tensor& g);
  void backward_record(std::size_t id);

  std::vector<Tensor> values_;
  std::vector<Record> records_;
  std::vector<bool> needs_grad_;
  std::vector<Tensor> grads_;
  std::map<std::string, std::size_t> params_;
  bool consumed_ = false;
};

// Recorded primitives.
Var matmul(Var a, Var b);
/// x[b x n] + bias[n] broadcast over rows.
Var add_bias(Var x, Var bias);
Var relu(Var x);
/// Normalize with fixed statistics then apply the affine map:
/// gamma * (x - mean) / sqrt(var + delta) + beta. No gradient flows into
/// mean or var.
Var normalize_running(Var x, const Tensor& mean, const Tensor& var, double delta, Var gamma, Var beta);
/// Normalize with the batch's own population statistics, gradients flowing
/// through them. Writes the statistics to the optional outputs.
Var batch_norm(Var x, Var gamma, Var beta, double delta, Tensor* batch_mean = nullptr, Tensor* batch_var = nullptr);
/// Mean over rows of -sum_k p_k log p_k, with 0 log 0 taken as 0.
Var mean_entropy(Var logits);
inline constexpr int kIgnoreLabel = -1;
/// Mean cross-entropy of logits against integer labels over the rows whose
/// label is not kIgnoreLabel.
Var cross_entropy(Var logits, std::span<const int> labels);
Var sum(Var x);
Var add(Var a, Var b);
Var scale(Var x, double factor);

/// Gradients of a scalar loss for every trainable parameter of `params`.
/// Trainable parameters that did not take part get zero tensors. Consumes
/// the tape.
GradMap backward(Tape& tape, Var loss, const ParamSet& params);

/// Column means and population variances (divisor = rows).
void column_moments(const Tensor& x, Tensor& mean, Tensor& var);

}  // namespace sotta
