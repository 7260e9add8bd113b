#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sotta/errors.hpp"
#include "sotta/esm.hpp"

using namespace sotta;

namespace {

Tensor random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Tensor t({rows, cols});
  for (double& v : t.data()) v = n(rng);
  return t;
}

Network small_net(std::uint64_t seed) { return init_network(NetworkSpec{6, {8, 8}, 3, 1e-5}, seed); }

double max_param_diff(const ParamSet& a, const ParamSet& b) {
  double worst = 0.0;
  for (const auto& [name, p] : a) worst = std::max(worst, max_abs_diff(p.value, b.value(name)));
  return worst;
}

}  // namespace

TEST(EpsilonHat, Examples) {
  const GradMap g{{"a", Tensor::vector({3.0, 4.0})}};
  const GradMap e = epsilon_hat(g, 0.05);
  EXPECT_NEAR(e.at("a")[0], 0.03, 1e-15);
  EXPECT_NEAR(e.at("a")[1], 0.04, 1e-15);
  const GradMap z = epsilon_hat(GradMap{{"a", Tensor::vector({0.0, 0.0})}}, 0.05);
  EXPECT_EQ(z.at("a"), Tensor::vector({0.0, 0.0}));
  const GradMap tiny = epsilon_hat(GradMap{{"a", Tensor::vector({1e-14, 0.0})}}, 0.05);
  EXPECT_EQ(tiny.at("a")[0], 0.0);
  EXPECT_THROW(epsilon_hat(g, -1.0), ContractError);
}

TEST(EpsilonHat, GlobalNormEqualsRho) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    GradMap g{{"a", Tensor::vector({n(rng), n(rng), n(rng)})}, {"b", Tensor::vector({n(rng)})}};
    const double rho = std::abs(n(rng));
    const GradMap e = epsilon_hat(g, rho);
    EXPECT_NEAR(global_norm(e), rho, 1e-9);
    EXPECT_EQ(e.at("a").shape(), g.at("a").shape());
  }
}

TEST(Adam, FirstStepExamples) {
  ParamSet p;
  p.add("t", Tensor::vector({1.0, 1.0, 1.0}), true);
  AdamState s;
  adam_update(p, GradMap{{"t", Tensor::vector({1.0, -2.5, 0.0})}}, s, 0.001);
  EXPECT_NEAR(p.value("t")[0], 1.0 - 0.001 / (1.0 + 1e-8), 1e-15);
  EXPECT_GT(p.value("t")[1], 1.0);
  EXPECT_EQ(p.value("t")[2], 1.0);
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, ZeroGradientKeepsParameters) {
  ParamSet p;
  p.add("t", Tensor::vector({0.3}), true);
  AdamState s;
  for (int i = 0; i < 50; ++i) adam_update(p, GradMap{{"t", Tensor::vector({0.0})}}, s, 0.01);
  EXPECT_EQ(p.value("t")[0], 0.3);
}

TEST(Adam, QuadraticSurrogateSharpnessStep) {
  // E(theta) = theta^2 at theta = 1 with rho = 0.1: g = 2, eps = 0.1, g' = 2.2.
  const GradMap g{{"t", Tensor::vector({2.0})}};
  const GradMap e = epsilon_hat(g, 0.1);
  EXPECT_NEAR(e.at("t")[0], 0.1, 1e-15);
  const double g_prime = 2.0 * (1.0 + e.at("t")[0]);
  EXPECT_NEAR(g_prime, 2.2, 1e-15);
  ParamSet p;
  p.add("t", Tensor::vector({1.0}), true);
  AdamState s;
  adam_update(p, GradMap{{"t", Tensor::vector({g_prime})}}, s, 0.001);
  EXPECT_NEAR(1.0 - p.value("t")[0], 0.001, 1e-9);
}

TEST(EsmStep, RhoZeroMatchesEmStep) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Network a = small_net(seed), b = small_net(seed);
    AdamState sa, sb;
    EsmConfig cfg;
    cfg.rho = 0.0;
    for (int step = 0; step < 5; ++step) {
      const Tensor x = random_batch(16, 6, 100 + step);
      const StepReport ra = esm_step(a, x, cfg, sa), rb = em_step(b, x, cfg, sb);
      EXPECT_EQ(ra.loss, rb.loss);
      EXPECT_EQ(ra.perturbed_loss, ra.loss);
    }
    EXPECT_EQ(a.params(), b.params());
  }
}

TEST(EsmStep, RestoresParametersExactly) {
  Network net = small_net(4);
  const ParamSet before = net.params();
  AdamState s;
  EsmConfig cfg;
  cfg.rho = 0.5;
  cfg.lr = 0.0;
  const StepReport r = esm_step(net, random_batch(16, 6, 2), cfg, s);
  EXPECT_EQ(net.params(), before);
  EXPECT_TRUE(std::isfinite(r.grad_norm));
  EXPECT_GT(r.loss, 0.0);
}

TEST(EsmStep, LeavesRunningStatsUntouched) {
  Network net = small_net(4);
  const auto stats = net.running_stats();
  AdamState s;
  esm_step(net, random_batch(16, 6, 2), EsmConfig{}, s);
  for (std::size_t i = 0; i < stats.size(); ++i) {
    EXPECT_EQ(net.running_stats()[i].mean, stats[i].mean);
    EXPECT_EQ(net.running_stats()[i].var, stats[i].var);
  }
}

TEST(EsmStep, UniformLogitsGiveNoChange) {
  // Zero head weights make every logit equal, so the entropy gradient vanishes.
  Network net = small_net(5);
  Tensor& w = net.params().value(Network::head_weight_name());
  for (double& v : w.data()) v = 0.0;
  const ParamSet before = net.params();
  AdamState s;
  const StepReport r = esm_step(net, random_batch(8, 6, 3), EsmConfig{}, s);
  EXPECT_EQ(net.params(), before);
  EXPECT_EQ(r.loss, r.perturbed_loss);
  EXPECT_NEAR(r.loss, std::log(3.0), 1e-12);
}

TEST(EsmStep, PerturbationAscendsForSmallRho) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    Network net = small_net(rng());
    AdamState s;
    EsmConfig cfg;
    cfg.rho = 1e-3;
    const StepReport r = esm_step(net, random_batch(16, 6, rng(), 2.0), cfg, s);
    EXPECT_GE(r.perturbed_loss, r.loss - 1e-12);
  }
}

TEST(EsmStep, ConvergesToEmAsRhoShrinks) {
  const Tensor x = random_batch(16, 6, 7);
  double previous = 1.0;
  for (double rho : {1e-1, 1e-3, 1e-5, 1e-7}) {
    Network a = small_net(9), b = small_net(9);
    AdamState sa, sb;
    EsmConfig cfg;
    cfg.rho = rho;
    // Several steps so Adam's moments mix the gradients instead of sign-normalizing them.
    for (int step = 0; step < 5; ++step) {
      esm_step(a, x, cfg, sa);
      em_step(b, x, cfg, sb);
    }
    const double diff = max_param_diff(a.params(), b.params());
    EXPECT_LE(diff, previous);
    previous = diff;
  }
  EXPECT_LT(previous, 1e-8);
}

TEST(EmStep, DescendsOnHighEntropyBatch) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Network net = small_net(seed);
    const Tensor x = random_batch(32, 6, 50 + seed);
    AdamState s;
    EsmConfig cfg;
    cfg.lr = 0.01;
    const double initial = em_step(net, x, cfg, s).loss;
    for (int i = 0; i < 19; ++i) em_step(net, x, cfg, s);
    EXPECT_LT(entropy_gradient(net, x).loss, initial);
  }
}

TEST(EmStep, ZeroLearningRateAndEmptyBatch) {
  Network net = small_net(1);
  const ParamSet before = net.params();
  AdamState s;
  EsmConfig cfg;
  cfg.lr = 0.0;
  const StepReport r = em_step(net, random_batch(4, 6, 1), cfg, s);
  EXPECT_EQ(net.params(), before);
  EXPECT_GT(r.loss, 0.0);
  EXPECT_THROW(em_step(net, Tensor(), cfg, s), NoSamplesError);
  EXPECT_THROW(esm_step(net, Tensor(), cfg, s), NoSamplesError);
}

TEST(EsmStep, ReproducibleReports) {
  Network a = small_net(3), b = small_net(3);
  AdamState sa, sb;
  const Tensor x = random_batch(16, 6, 5);
  const StepReport ra = esm_step(a, x, EsmConfig{}, sa), rb = esm_step(b, x, EsmConfig{}, sb);
  EXPECT_EQ(ra.loss, rb.loss);
  EXPECT_EQ(ra.perturbed_loss, rb.perturbed_loss);
  EXPECT_EQ(ra.grad_norm, rb.grad_norm);
}
