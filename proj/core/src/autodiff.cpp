#include "sotta/autodiff.hpp"

#include <cmath>

#include "sotta/errors.hpp"

namespace sotta {

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("value() on an unbound Var");
  return tape_->value(id_);
}

Var Tape::constant(Tensor value) {
  values_.push_back(std::move(value));
  records_.push_back(Record{});
  needs_grad_.push_back(false);
  return Var(this, values_.size() - 1);
}

Var Tape::input(Tensor value) {
  Var v = constant(std::move(value));
  needs_grad_.back() = true;
  return v;
}

Var Tape::param(const std::string& name, const Tensor& value, bool trainable) {
  Var v = trainable ? input(value) : constant(value);
  if (trainable) {
    auto [it, inserted] = params_.emplace(name, v.id());
    if (!inserted) throw ContractError("parameter '" + name + "' bound twice on one tape");
  }
  return v;
}

Var Tape::push(OpKind op, std::vector<std::size_t> inputs, Tensor value, std::vector<Tensor> saved, double scalar) {
  bool grad = false;
  for (auto id : inputs) {
    if (id >= values_.size()) throw ContractError("tape input refers to a later node");
    grad = grad || needs_grad_[id];
  }
  values_.push_back(std::move(value));
  Record rec;
  rec.op = op;
  rec.inputs = std::move(inputs);
  rec.scalar = scalar;
  if (grad) rec.saved = std::move(saved);
  records_.push_back(std::move(rec));
  needs_grad_.push_back(grad);
  return Var(this, values_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  if (!needs_grad_[id]) return;
  Tensor& acc = grads_[id];
  if (acc.empty()) {
    acc = g;
    return;
  }
  auto dst = acc.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("backward: loss belongs to a different tape");
  if (consumed_) throw ContractError("backward: tape already consumed");
  if (!value(loss.id()).is_scalar()) {
    throw ContractError("backward: loss must be scalar, got shape " + shape_to_string(value(loss.id()).shape()));
  }
  consumed_ = true;
  grads_.assign(values_.size(), Tensor{});
  if (!needs_grad_[loss.id()]) return;
  grads_[loss.id()] = Tensor::filled(value(loss.id()).shape(), 1.0);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    if (records_[id].op == OpKind::kLeaf || !needs_grad_[id] || grads_[id].empty()) continue;
    backward_record(id);
  }
}

void Tape::backward_record(std::size_t id) {
  const Record& rec = records_[id];
  const Tensor& dy = grads_[id];
  switch (rec.op) {
    case OpKind::kLeaf:
      break;
    case OpKind::kMatMul: {
      const Tensor& a = values_[rec.inputs[0]];
      const Tensor& b = values_[rec.inputs[1]];
      if (needs_grad_[rec.inputs[0]]) accumulate(rec.inputs[0], matmul_values(dy, transpose(b)));
      if (needs_grad_[rec.inputs[1]]) accumulate(rec.inputs[1], matmul_values(transpose(a), dy));
      break;
    }
    case OpKind::kAddBias: {
      accumulate(rec.inputs[0], dy);
      if (needs_grad_[rec.inputs[1]]) {
        Tensor db(values_[rec.inputs[1]].shape());
        for (std::size_t r = 0; r < dy.rows(); ++r)
          for (std::size_t c = 0; c < dy.cols(); ++c) db[c] += dy(r, c);
        accumulate(rec.inputs[1], db);
      }
      break;
    }
    case OpKind::kRelu: {
      const Tensor& x = values_[rec.inputs[0]];
      Tensor dx(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
      accumulate(rec.inputs[0], dx);
      break;
    }
    case OpKind::kRunningNorm:
    case OpKind::kBatchNorm: {
      const Tensor& xhat = rec.saved[0];
      const Tensor& inv_std = rec.saved[1];
      const Tensor& gamma = values_[rec.inputs[1]];
      const std::size_t b = dy.rows(), n = dy.cols();
      if (needs_grad_[rec.inputs[1]] || needs_grad_[rec.inputs[2]]) {
        Tensor dgamma(gamma.shape()), dbeta(gamma.shape());
        for (std::size_t r = 0; r < b; ++r)
          for (std::size_t c = 0; c < n; ++c) {
            dgamma[c] += dy(r, c) * xhat(r, c);
            dbeta[c] += dy(r, c);
          }
        accumulate(rec.inputs[1], dgamma);
        accumulate(rec.inputs[2], dbeta);
      }
      if (!needs_grad_[rec.inputs[0]]) break;
      Tensor dx(dy.shape());
      if (rec.op == OpKind::kRunningNorm) {
        for (std::size_t r = 0; r < b; ++r)
          for (std::size_t c = 0; c < n; ++c) dx(r, c) = dy(r, c) * gamma[c] * inv_std[c];
      } else {
        const double bd = static_cast<double>(b);
        for (std::size_t c = 0; c < n; ++c) {
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t r = 0; r < b; ++r) {
            const double d = dy(r, c) * gamma[c];
            sum_d += d;
            sum_dx += d * xhat(r, c);
          }
          for (std::size_t r = 0; r < b; ++r) {
            const double d = dy(r, c) * gamma[c];
            dx(r, c) = inv_std[c] / bd * (bd * d - sum_d - xhat(r, c) * sum_dx);
          }
        }
      }
      accumulate(rec.inputs[0], dx);
      break;
    }
    case OpKind::kMeanEntropy: {
      const Tensor& p = rec.saved[0];
      const Tensor& logp = rec.saved[1];
      const Tensor& h = rec.saved[2];
      const double scale = dy.item() / static_cast<double>(p.rows());
      Tensor dz(p.shape());
      for (std::size_t r = 0; r < p.rows(); ++r)
        for (std::size_t c = 0; c < p.cols(); ++c) dz(r, c) = -scale * p(r, c) * (logp(r, c) + h[r]);
      accumulate(rec.inputs[0], dz);
      break;
    }
    case OpKind::kCrossEntropy: {
      const Tensor& p = rec.saved[0];
      const Tensor& labels = rec.saved[1];
      const double scale = dy.item() / rec.scalar;
      Tensor dz(p.shape());
      for (std::size_t r = 0; r < p.rows(); ++r) {
        if (labels[r] < 0) continue;
        const auto y = static_cast<std::size_t>(labels[r]);
        for (std::size_t c = 0; c < p.cols(); ++c) dz(r, c) = scale * (p(r, c) - (c == y ? 1.0 : 0.0));
      }
      accumulate(rec.inputs[0], dz);
      break;
    }
    case OpKind::kSum: {
      accumulate(rec.inputs[0], Tensor::filled(values_[rec.inputs[0]].shape(), dy.item()));
      break;
    }
    case OpKind::kAdd:
      accumulate(rec.inputs[0], dy);
      accumulate(rec.inputs[1], dy);
      break;
    case OpKind::kScale: {
      Tensor dx(dy.shape());
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * rec.scalar;
      accumulate(rec.inputs[0], dx);
      break;
    }
  }
}

Tensor Tape::grad(Var v) const {
  if (v.tape() != this) throw ContractError("grad: Var belongs to a different tape");
  if (v.id() < grads_.size() && !grads_[v.id()].empty()) return grads_[v.id()];
  return Tensor(values_.at(v.id()).shape());
}

GradMap Tape::param_grads() const {
  GradMap out;
  for (const auto& [name, id] : params_) out.emplace(name, grad(Var(const_cast<Tape*>(this), id)));
  return out;
}

namespace {

Tape& same_tape(Var a, Var b) {
  if (!a.tape() || a.tape() != b.tape()) throw ContractError("operands live on different tapes");
  return *a.tape();
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw DimensionError(std::string(what) + " expects a matrix, got " + shape_to_string(t.shape()));
}

void require_width(const Tensor& v, std::size_t n, const char* what) {
  if (v.size() != n) {
    throw DimensionError(std::string(what) + ": per-feature vector " + shape_to_string(v.shape()) +
                         " does not match width " + std::to_string(n));
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  return tape.push(OpKind::kMatMul, {a.id(), b.id()}, matmul_values(a.value(), b.value()));
}

Var add_bias(Var x, Var bias) {
  Tape& tape = same_tape(x, bias);
  const Tensor& xv = x.value();
  require_matrix(xv, "add_bias");
  require_width(bias.value(), xv.cols(), "add_bias");
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bias.value()[c];
  return tape.push(OpKind::kAddBias, {x.id(), bias.id()}, std::move(out));
}

Var relu(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return x.tape()->push(OpKind::kRelu, {x.id()}, std::move(out));
}

namespace {

Var normalize_with(Var x, const Tensor& mean, const Tensor& var, double delta, Var gamma, Var beta, OpKind op) {
  Tape& tape = same_tape(x, gamma);
  same_tape(x, beta);
  const Tensor& xv = x.value();
  require_matrix(xv, "normalize");
  const std::size_t n = xv.cols();
  require_width(mean, n, "normalize mean");
  require_width(var, n, "normalize var");
  require_width(gamma.value(), n, "normalize gamma");
  require_width(beta.value(), n, "normalize beta");
  Tensor inv_std({n});
  for (std::size_t c = 0; c < n; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + delta);
  Tensor xhat(xv.shape());
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < n; ++c) {
      xhat(r, c) = (xv(r, c) - mean[c]) * inv_std[c];
      out(r, c) = gamma.value()[c] * xhat(r, c) + beta.value()[c];
    }
  return tape.push(op, {x.id(), gamma.id(), beta.id()}, std::move(out), {std::move(xhat), std::move(inv_std)});
}

}  // namespace

Var normalize_running(Var x, const Tensor& mean, const Tensor& var, double delta, Var gamma, Var beta) {
  return normalize_with(x, mean, var, delta, gamma, beta, OpKind::kRunningNorm);
}

void column_moments(const Tensor& x, Tensor& mean, Tensor& var) {
  const std::size_t b = x.rows(), n = x.cols();
  if (b == 0) throw ContractError("column_moments on an empty batch");
  mean = Tensor({n});
  var = Tensor({n});
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t c = 0; c < n; ++c) mean[c] += x(r, c);
  for (std::size_t c = 0; c < n; ++c) mean[c] /= static_cast<double>(b);
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const double d = x(r, c) - mean[c];
      var[c] += d * d;
    }
  for (std::size_t c = 0; c < n; ++c) var[c] /= static_cast<double>(b);
}

Var batch_norm(Var x, Var gamma, Var beta, double delta, Tensor* batch_mean, Tensor* batch_var) {
  require_matrix(x.value(), "batch_norm");
  Tensor mean, var;
  column_moments(x.value(), mean, var);
  Var out = normalize_with(x, mean, var, delta, gamma, beta, OpKind::kBatchNorm);
  if (batch_mean) *batch_mean = std::move(mean);
  if (batch_var) *batch_var = std::move(var);
  return out;
}

Var mean_entropy(Var logits) {
  const Tensor& z = logits.value();
  require_matrix(z, "mean_entropy");
  if (z.rows() == 0) throw ContractError("mean_entropy on an empty batch");
  Tensor logp = log_softmax_rows(z);
  Tensor p(z.shape());
  Tensor h({z.rows()});
  double total = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    double hr = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) {
      p(r, c) = std::exp(logp(r, c));
      hr -= p(r, c) * logp(r, c);
    }
    h[r] = hr;
    total += hr;
  }
  Tensor value = Tensor::scalar(total / static_cast<double>(z.rows()));
  return logits.tape()->push(OpKind::kMeanEntropy, {logits.id()}, std::move(value),
                             {std::move(p), std::move(logp), std::move(h)});
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  require_matrix(z, "cross_entropy");
  if (labels.size() != z.rows()) throw DimensionError("cross_entropy: label count does not match batch rows");
  Tensor logp = log_softmax_rows(z);
  Tensor p(z.shape());
  Tensor lab({z.rows()});
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    lab[r] = labels[r];
    if (labels[r] == kIgnoreLabel) continue;
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= z.cols())
      throw ContractError("cross_entropy: label out of range");
    for (std::size_t c = 0; c < z.cols(); ++c) p(r, c) = std::exp(logp(r, c));
    total -= logp(r, static_cast<std::size_t>(labels[r]));
    ++counted;
  }
  if (counted == 0) throw ContractError("cross_entropy: no labelled rows");
  Tensor value = Tensor::scalar(total / static_cast<double>(counted));
  return logits.tape()->push(OpKind::kCrossEntropy, {logits.id()}, std::move(value), {std::move(p), std::move(lab)},
                             static_cast<double>(counted));
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape()->push(OpKind::kSum, {x.id()}, Tensor::scalar(s));
}

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  if (a.value().shape() != b.value().shape()) {
    throw DimensionError("add shape mismatch: " + shape_to_string(a.value().shape()) + " + " +
                         shape_to_string(b.value().shape()));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return tape.push(OpKind::kAdd, {a.id(), b.id()}, std::move(out));
}

Var scale(Var x, double factor) {
  Tensor out = x.value();
  for (double& v : out.data()) v *= factor;
  return x.tape()->push(OpKind::kScale, {x.id()}, std::move(out), {}, factor);
}

GradMap backward(Tape& tape, Var loss, const ParamSet& params) {
  tape.backward(loss);
  GradMap out;
  for (const auto& [name, p] : params) {
    if (!p.trainable) continue;
    auto it = tape.params().find(name);
    if (it == tape.params().end()) {
      out.emplace(name, Tensor(p.value.shape()));
    } else {
      out.emplace(name, tape.grad(Var(&tape, it->second)));
    }
  }
  return out;
}

}  // namespace sotta
