#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sotta/checkpoint.hpp"
#include "sotta/errors.hpp"
#include "sotta/esm.hpp"
#include "sotta/network.hpp"
#include "sotta/stream.hpp"

using namespace sotta;

namespace {

// 1 -> [1] -> 2 network whose head exposes the normalized unit as logits (y, -y).
Network scalar_bn_net() {
  Network net(NetworkSpec{1, {1}, 2, 0.0});
  net.params().value(Network::weight_name(0))[0] = 1.0;
  net.params().value(Network::head_weight_name()) = Tensor::matrix({{1.0, -1.0}});
  return net;
}

Tensor random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t({rows, cols});
  for (double& v : t.data()) v = n(rng);
  return t;
}

}  // namespace

TEST(Network, InitIsDeterministicWithUnitAffine) {
  const Network a = init_network(NetworkSpec{}, 5), b = init_network(NetworkSpec{}, 5);
  EXPECT_EQ(a.params(), b.params());
  EXPECT_FALSE(a.params() == init_network(NetworkSpec{}, 6).params());
  for (std::size_t i = 0; i < a.bn_layers(); ++i) {
    const BnLayerState s = a.bn_state(i);
    for (double v : s.gamma.data()) EXPECT_EQ(v, 1.0);
    for (double v : s.beta.data()) EXPECT_EQ(v, 0.0);
    for (double v : s.running_mean.data()) EXPECT_EQ(v, 0.0);
    for (double v : s.running_var.data()) EXPECT_EQ(v, 1.0);
  }
  const Tensor& w = a.params().value(Network::weight_name(0));
  const double bound = std::sqrt(6.0 / (16 + 64));
  for (double v : w.data()) EXPECT_LE(std::abs(v), bound);
}

TEST(Network, PartitionOnlyNormAffineTrainable) {
  const Network net = init_network(NetworkSpec{}, 1);
  const std::vector<std::string> expect{"bn0.beta", "bn0.gamma", "bn1.beta", "bn1.gamma"};
  EXPECT_EQ(net.params().trainable_names(), expect);
}

TEST(Network, SpecValidation) {
  EXPECT_THROW(Network(NetworkSpec{0, {4}, 2, 1e-5}), ContractError);
  EXPECT_THROW(Network(NetworkSpec{4, {4}, 1, 1e-5}), ContractError);
  EXPECT_THROW(Network(NetworkSpec{4, {0}, 2, 1e-5}), ContractError);
}

TEST(Forward, IdentityNormalization) {
  const Network net = scalar_bn_net();
  const ForwardPass p = forward(net, Tensor::matrix({{0.75}}));
  EXPECT_DOUBLE_EQ(p.logits(0, 0), 0.75);
}

TEST(Forward, AffineFormulaWithRunningStats) {
  Network net = scalar_bn_net();
  net.params().value(Network::gamma_name(0))[0] = 2.0;
  net.params().value(Network::beta_name(0))[0] = 3.0;
  net.running_stats()[0] = BnStats{Tensor::vector({1.0}), Tensor::vector({4.0})};
  EXPECT_DOUBLE_EQ(forward(net, Tensor::matrix({{5.0}})).logits(0, 0), 7.0);
}

TEST(Forward, ReturnsPopulationBatchMoments) {
  const Network net = scalar_bn_net();
  const ForwardPass p = forward(net, Tensor::matrix({{0.0}, {2.0}}));
  EXPECT_DOUBLE_EQ(p.bn_batch_stats[0].mean[0], 1.0);
  EXPECT_DOUBLE_EQ(p.bn_batch_stats[0].var[0], 1.0);
}

TEST(Forward, FreshNetworkScalesByDeltaFactor) {
  NetworkSpec spec{3, {3}, 2, 1e-5};
  Network net(spec);
  Tensor& w = net.params().value(Network::weight_name(0));
  for (std::size_t i = 0; i < 3; ++i) w(i, i) = 1.0;
  // With an identity affine, the hidden unit equals x / sqrt(1 + delta); the head reads unit 0.
  net.params().value(Network::head_weight_name())(0, 0) = 1.0;
  const ForwardPass p = forward(net, Tensor::matrix({{0.8, -0.2, 0.1}}));
  EXPECT_NEAR(p.logits(0, 0), 0.8 / std::sqrt(1.0 + 1e-5), 1e-15);
}

TEST(Forward, RecordingDoesNotChangeLogits) {
  const Network net = init_network(NetworkSpec{}, 3);
  const Tensor x = random_batch(8, 16, 4);
  EXPECT_EQ(forward(net, x, false).logits, forward(net, x, true).logits);
  EXPECT_THROW(forward(net, random_batch(2, 5, 1)), DimensionError);
}

TEST(Forward, FrozenWeightsGetNoGradient) {
  const Network net = init_network(NetworkSpec{}, 3);
  const EntropyGrad g = entropy_gradient(net, random_batch(8, 16, 5));
  for (const auto& [name, t] : g.grads) EXPECT_TRUE(net.params().at(name).trainable) << name;
  EXPECT_EQ(g.grads.size(), 4u);
}

TEST(Ema, Examples) {
  Network net = scalar_bn_net();
  const std::vector<BnStats> one{BnStats{Tensor::vector({1.0}), Tensor::vector({1.0})}};
  ema_update(net, one, 0.2);
  EXPECT_DOUBLE_EQ(net.running_stats()[0].mean[0], 0.2);
  ema_update(net, one, 0.2);
  EXPECT_NEAR(net.running_stats()[0].mean[0], 0.36, 1e-15);
  ema_update(net, one, 0.0);
  EXPECT_NEAR(net.running_stats()[0].mean[0], 0.36, 1e-15);
  ema_update(net, one, 1.0);
  EXPECT_EQ(net.running_stats()[0].mean[0], 1.0);
  EXPECT_THROW(ema_update(net, one, 1.5), ContractError);
  EXPECT_THROW(ema_update(net, one, -0.1), ContractError);
}

TEST(Ema, ContractionAndNonNegativeVariance) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Network net = scalar_bn_net();
  for (int step = 0; step < 500; ++step) {
    const double target = 10.0 * u(rng) - 5.0, m = u(rng);
    const double before = net.running_stats()[0].mean[0];
    ema_update(net, {BnStats{Tensor::vector({target}), Tensor::vector({u(rng)})}}, m);
    EXPECT_NEAR(std::abs(net.running_stats()[0].mean[0] - target), (1 - m) * std::abs(before - target), 1e-12);
    EXPECT_GE(net.running_stats()[0].var[0], 0.0);
  }
}

TEST(Prediction, Examples) {
  const std::vector<double> a{2, 0, 0};
  const Prediction p = prediction_from_logits(a);
  EXPECT_EQ(p.label, 0);
  EXPECT_NEAR(p.confidence, 0.78699, 1e-5);
  const std::vector<double> uniform(10, 0.3);
  const Prediction u = prediction_from_logits(uniform);
  EXPECT_EQ(u.label, 0);
  EXPECT_NEAR(u.confidence, 0.1, 1e-15);
  const std::vector<double> sat{0, 100};
  const Prediction s = prediction_from_logits(sat);
  EXPECT_EQ(s.label, 1);
  EXPECT_NEAR(s.confidence, 1.0, 1e-12);
}

TEST(Prediction, ConfidenceAtLeastOneOverK) {
  const Network net = init_network(NetworkSpec{}, 2);
  const Tensor x = random_batch(50, 16, 9);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const Prediction p = predict_with_confidence(net, slice_rows(x, r, r + 1));
    EXPECT_GE(p.confidence, 0.25);
    EXPECT_LE(p.confidence, 1.0);
  }
}

TEST(Pretrain, BlobsReachHighHoldoutAccuracy) {
  const Benchmark bench = make_benchmark(BenchmarkConfig{}, 17);
  Network net = init_network(NetworkSpec{}, 1);
  const LabeledDataset train = source_train_set(bench, 2), hold = source_holdout_set(bench, 3);
  const TrainingLog log = pretrain_source(net, train, PretrainConfig{}, &hold);
  EXPECT_GT(log.holdout_accuracy, 0.95);
  EXPECT_EQ(log.epoch_loss.size(), 30u);
  EXPECT_LT(log.epoch_loss.back(), log.epoch_loss.front());
}

TEST(Pretrain, ZeroLearningRateKeepsParameters) {
  const LabeledDataset train = gen_blobs(1, 4, 16, 20);
  Network net = init_network(NetworkSpec{}, 1);
  const ParamSet before = net.params();
  PretrainConfig cfg;
  cfg.epochs = 1;
  cfg.lr = 0.0;
  pretrain_source(net, train, cfg);
  EXPECT_EQ(net.params(), before);
}

TEST(Pretrain, DeterministicAndRejectsEmpty) {
  const LabeledDataset train = gen_blobs(1, 4, 16, 20);
  PretrainConfig cfg;
  cfg.epochs = 3;
  Network a = init_network(NetworkSpec{}, 1), b = init_network(NetworkSpec{}, 1);
  pretrain_source(a, train, cfg);
  pretrain_source(b, train, cfg);
  EXPECT_EQ(save_checkpoint(a), save_checkpoint(b));
  const LabeledDataset empty;
  EXPECT_THROW(pretrain_source(a, empty, cfg), ContractError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Network net = init_network(NetworkSpec{}, 4);
  net.running_stats()[1].mean[3] = 0.125;
  net.set_source_stats(compute_feature_stats(random_batch(10, 16, 1)));
  const std::string bytes = save_checkpoint(net);
  EXPECT_EQ(bytes.substr(0, kCheckpointMagic.size()), kCheckpointMagic);
  const Network back = load_checkpoint(bytes);
  EXPECT_EQ(save_checkpoint(back), bytes);
  const Tensor x = random_batch(6, 16, 2);
  EXPECT_EQ(forward(back, x).logits, forward(net, x).logits);
  EXPECT_EQ(network_fingerprint(back), network_fingerprint(net));
}

TEST(Checkpoint, TruncationCorruptionAndSpecMismatch) {
  const Network net = init_network(NetworkSpec{}, 4);
  const std::string bytes = save_checkpoint(net);
  EXPECT_THROW(load_checkpoint(bytes.substr(0, bytes.size() - 9)), CheckpointError);
  EXPECT_THROW(load_checkpoint(bytes.substr(0, 20)), CheckpointError);
  std::string flipped = bytes;
  flipped[flipped.size() - 3] ^= 0x10;
  EXPECT_THROW(load_checkpoint(flipped), CheckpointError);
  std::string magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(load_checkpoint(magic), CheckpointError);
  EXPECT_THROW(load_checkpoint(bytes, NetworkSpec{16, {32}, 4, 1e-5}), CheckpointError);
  EXPECT_NO_THROW(load_checkpoint(bytes, NetworkSpec{}));
}
