#include "sotta/stream.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "sotta/errors.hpp"
#include "sotta/seeds.hpp"

namespace sotta {

namespace {

// Shift geometry per unit of shift_strength.
constexpr double kRotationPerStrength = 0.1;  // radians in every rotation plane
constexpr double kLogScalePerStrength = 0.8;  // std of the log axis scales
constexpr double kOffsetPerStrength = 0.5;
constexpr double kNoisePerStrength = 0.3;
constexpr double kFarNoise = 0.1;

Tensor gaussian_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor t({rows, cols});
  for (double& v : t.data()) v = normal(rng);
  return t;
}

Tensor random_direction(std::size_t dim, std::mt19937_64& rng) {
  Tensor v = gaussian_matrix(1, dim, rng);
  const double n = l2_norm(v.data());
  for (double& x : v.data()) x /= n;
  return v;
}

// Rows of the result are an orthonormal basis (modified Gram-Schmidt).
Tensor random_orthonormal(std::size_t dim, std::mt19937_64& rng) {
  Tensor q = gaussian_matrix(dim, dim, rng);
  for (std::size_t i = 0; i < dim; ++i) {
    auto qi = q.row(i);
    for (std::size_t j = 0; j < i; ++j) {
      auto qj = q.row(j);
      double dot = 0.0;
      for (std::size_t c = 0; c < dim; ++c) dot += qi[c] * qj[c];
      for (std::size_t c = 0; c < dim; ++c) qi[c] -= dot * qj[c];
    }
    const double n = l2_norm(qi);
    for (double& v : qi) v /= n;
  }
  return q;
}

}  // namespace

std::string to_string(Scenario scenario) {
  switch (scenario) {
    case Scenario::kBenign: return "benign";
    case Scenario::kNear: return "near";
    case Scenario::kFar: return "far";
    case Scenario::kAttack: return "attack";
    case Scenario::kNoise: return "noise";
  }
  return "unknown";
}

Scenario parse_scenario(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (auto s : {Scenario::kBenign, Scenario::kNear, Scenario::kFar, Scenario::kAttack, Scenario::kNoise})
    if (to_string(s) == lower) return s;
  throw std::invalid_argument("unknown scenario '" + name + "'");
}

BlobWorld make_blob_world(std::uint64_t seed, std::size_t classes, std::size_t dim, double center_scale) {
  if (classes < 2) throw ContractError("blob world needs at least two classes");
  if (dim < 2) throw ContractError("blob world needs at least two dimensions");
  std::mt19937_64 rng(seed);
  BlobWorld world;
  world.center_scale = center_scale;
  world.centers = Tensor({classes, dim});
  for (std::size_t k = 0; k < classes; ++k) {
    Tensor dir = random_direction(dim, rng);
    for (std::size_t c = 0; c < dim; ++c) world.centers(k, c) = center_scale * dir[c];
  }
  return world;
}

LabeledDataset sample_blobs(const BlobWorld& world, std::size_t n_per_class, double sigma, std::uint64_t seed) {
  if (n_per_class == 0) throw ContractError("sample_blobs: n_per_class must be positive");
  const std::size_t k = world.centers.rows(), d = world.centers.cols();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  Tensor x({k * n_per_class, d});
  std::vector<int> labels;
  labels.reserve(k * n_per_class);
  for (std::size_t cls = 0; cls < k; ++cls) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      auto row = x.row(cls * n_per_class + i);
      for (std::size_t c = 0; c < d; ++c) row[c] = world.centers(cls, c) + normal(rng);
      labels.push_back(static_cast<int>(cls));
    }
  }
  return make_dataset(std::move(x), std::move(labels));
}

LabeledDataset gen_blobs(std::uint64_t seed, std::size_t classes, std::size_t dim, std::size_t n_per_class,
                         double center_scale, double sigma) {
  if (n_per_class == 0) throw ContractError("gen_blobs: empty dataset requested");
  const RngTree tree{seed};
  const BlobWorld world = make_blob_world(tree.derive("centers"), classes, dim, center_scale);
  return sample_blobs(world, n_per_class, sigma, tree.derive("samples"));
}

Corruption make_corruption(std::uint64_t seed, std::size_t dim, double shift_strength) {
  if (!(shift_strength >= 0.0)) throw ContractError("shift_strength must be non-negative");
  Corruption corr;
  corr.transform = Tensor({dim, dim});
  for (std::size_t i = 0; i < dim; ++i) corr.transform(i, i) = 1.0;
  corr.offset = Tensor({dim});
  if (shift_strength == 0.0) return corr;

  corr.identity = false;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Tensor basis = random_orthonormal(dim, rng);
  // G S: axis scaling, then a rotation of each consecutive pair of axes.
  const double angle = kRotationPerStrength * shift_strength;
  Tensor gs({dim, dim});
  for (std::size_t i = 0; i < dim; ++i) gs(i, i) = 1.0;
  for (std::size_t i = 0; i + 1 < dim; i += 2) {
    gs(i, i) = std::cos(angle);
    gs(i, i + 1) = -std::sin(angle);
    gs(i + 1, i) = std::sin(angle);
    gs(i + 1, i + 1) = std::cos(angle);
  }
  for (std::size_t c = 0; c < dim; ++c) {
    const double s = std::exp(kLogScalePerStrength * shift_strength * normal(rng));
    for (std::size_t r = 0; r < dim; ++r) gs(r, c) *= s;
  }
  corr.transform = matmul_values(matmul_values(transpose(basis), gs), basis);
  for (std::size_t c = 0; c < dim; ++c) corr.offset[c] = kOffsetPerStrength * shift_strength * normal(rng);
  corr.noise_sigma = kNoisePerStrength * shift_strength;
  return corr;
}

Tensor apply_corruption(const Tensor& features, const Corruption& corruption, std::uint64_t noise_seed) {
  if (corruption.identity || features.rows() == 0) return features;
  const std::size_t d = features.cols();
  if (corruption.transform.rows() != d) throw DimensionError("corruption width does not match features");
  // Row vectors: y = x A^T.
  Tensor out = matmul_values(features, transpose(corruption.transform));
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> normal(0.0, corruption.noise_sigma > 0.0 ? corruption.noise_sigma : 1.0);
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < d; ++c) {
      out(r, c) += corruption.offset[c];
      if (corruption.noise_sigma > 0.0) out(r, c) += normal(rng);
    }
  return out;
}

LabeledDataset corrupt(const LabeledDataset& data, std::uint64_t seed, double shift_strength) {
  if (shift_strength == 0.0) return data;
  const Corruption corr = make_corruption(seed, data.dim(), shift_strength);
  return make_dataset(apply_corruption(data.features, corr, mix64(seed)), data.labels);
}

Tensor make_near_centers(const NoisyContext& ctx, std::uint64_t seed) {
  const std::size_t d = ctx.world.centers.cols();
  std::mt19937_64 rng(seed);
  Tensor centers({ctx.extra_classes, d});
  const double min_gap = kNearCenterGap * ctx.sigma;
  for (std::size_t k = 0; k < ctx.extra_classes; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < 100000 && !placed; ++attempt) {
      Tensor dir = random_direction(d, rng);
      bool ok = true;
      for (std::size_t t = 0; t < ctx.world.centers.rows() && ok; ++t) {
        double dist2 = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double diff = ctx.world.center_scale * dir[c] - ctx.world.centers(t, c);
          dist2 += diff * diff;
        }
        ok = std::sqrt(dist2) >= min_gap;
      }
      if (!ok) continue;
      for (std::size_t c = 0; c < d; ++c) centers(k, c) = ctx.world.center_scale * dir[c];
      placed = true;
    }
    if (!placed) throw std::runtime_error("could not place a near-distribution center away from training centers");
  }
  return centers;
}

Tensor gen_noisy(Scenario scenario, std::size_t n, std::size_t dim, std::uint64_t seed, const NoisyContext& ctx) {
  Tensor out({n, dim});
  if (n == 0) return out;
  std::mt19937_64 rng(seed);
  switch (scenario) {
    case Scenario::kNear: {
      if (ctx.extra_classes == 0) throw ContractError("near scenario needs extra classes");
      const Tensor centers = make_near_centers(ctx, mix64(seed));
      std::normal_distribution<double> normal(0.0, ctx.sigma);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = i % ctx.extra_classes;
        for (std::size_t c = 0; c < dim; ++c) out(i, c) = centers(k, c) + normal(rng);
      }
      return out;
    }
    case Scenario::kFar: {
      const std::size_t active = (dim + 3) / 4;
      std::vector<std::size_t> coords(dim);
      std::normal_distribution<double> normal(0.0, kFarNoise * ctx.sigma);
      std::bernoulli_distribution coin(0.5);
      for (std::size_t i = 0; i < n; ++i) {
        std::iota(coords.begin(), coords.end(), 0);
        std::shuffle(coords.begin(), coords.end(), rng);
        for (std::size_t c = 0; c < dim; ++c) out(i, c) = normal(rng);
        for (std::size_t a = 0; a < active; ++a) out(i, coords[a]) += coin(rng) ? ctx.corner_scale : -ctx.corner_scale;
      }
      return out;
    }
    case Scenario::kNoise: {
      if (ctx.box_min.size() != dim || ctx.box_max.size() != dim) throw DimensionError("noise box width mismatch");
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < dim; ++c)
          out(i, c) = ctx.box_min[c] + (ctx.box_max[c] - ctx.box_min[c]) * unit(rng);
      return out;
    }
    case Scenario::kBenign:
    case Scenario::kAttack:
      break;
  }
  throw ContractError("gen_noisy: unsupported scenario '" + to_string(scenario) + "'");
}

namespace {

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.rows() == 0) return b;
  if (b.rows() == 0) return a;
  if (a.cols() != b.cols()) throw DimensionError("concat_rows width mismatch");
  std::vector<double> data(a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  return Tensor({a.rows() + b.rows(), a.cols()}, std::move(data));
}

ForwardPass joint_forward(const Network& net, const Tensor& joint, bool input_grad) {
  ForwardOptions opts;
  opts.mode = NormMode::kBatch;
  opts.input_grad = input_grad;
  return forward(net, joint, opts);
}

}  // namespace

Tensor dia_attack(const Network& net, const Tensor& benign_batch, const Tensor& malicious_init, double epsilon,
                  double alpha, std::size_t steps) {
  if (steps == 0) throw ContractError("dia_attack: steps must be at least 1");
  if (!(epsilon >= 0.0)) throw ContractError("dia_attack: epsilon must be non-negative");
  if (epsilon == 0.0 || malicious_init.rows() == 0) return malicious_init;
  const std::size_t nb = benign_batch.rows();

  std::vector<int> targets(nb + malicious_init.rows(), -1);
  {
    const ForwardPass pass = joint_forward(net, concat_rows(benign_batch, malicious_init), false);
    for (std::size_t r = 0; r < nb; ++r) targets[r] = prediction_from_logits(pass.logits.row(r)).label;
  }

  Tensor mal = malicious_init;
  for (std::size_t step = 0; step < steps; ++step) {
    ForwardPass pass = joint_forward(net, concat_rows(benign_batch, mal), true);
    Var loss = cross_entropy(pass.logits_var, targets);
    pass.tape->backward(loss);
    const Tensor grad = pass.tape->grad(pass.input_var);
    for (std::size_t r = 0; r < mal.rows(); ++r)
      for (std::size_t c = 0; c < mal.cols(); ++c) {
        const double g = grad(nb + r, c);
        const double sign = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
        const double lo = malicious_init(r, c) - epsilon;
        const double hi = malicious_init(r, c) + epsilon;
        mal(r, c) = std::clamp(mal(r, c) + alpha * sign, lo, hi);
      }
  }
  return mal;
}

double joint_batch_accuracy(const Network& net, const Tensor& benign, const std::vector<int>& labels,
                            const Tensor& others) {
  if (labels.size() != benign.rows()) throw DimensionError("joint_batch_accuracy: label count mismatch");
  if (labels.empty()) return 0.0;
  const ForwardPass pass = joint_forward(net, concat_rows(benign, others), false);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < labels.size(); ++r)
    if (prediction_from_logits(pass.logits.row(r)).label == labels[r]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

std::vector<StreamSample> mix_and_shuffle(std::vector<StreamSample> benign, std::vector<StreamSample> noisy,
                                          std::uint64_t seed) {
  std::vector<StreamSample> all = std::move(benign);
  all.reserve(all.size() + noisy.size());
  for (auto& s : noisy) all.push_back(std::move(s));
  std::mt19937_64 rng(seed);
  for (std::size_t i = all.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    const std::size_t j = pick(rng);
    if (j != i - 1) std::swap(all[i - 1], all[j]);
  }
  return all;
}

std::size_t ScenarioConfig::resolved_noisy_count(std::size_t benign_count) const {
  if (scenario == Scenario::kBenign) return 0;
  if (noisy_count) return *noisy_count;
  if (!(noisy_ratio >= 0.0)) throw ContractError("noisy_ratio must be non-negative");
  return static_cast<std::size_t>(std::llround(noisy_ratio * static_cast<double>(benign_count)));
}

Benchmark make_benchmark(const BenchmarkConfig& config, std::uint64_t world_seed) {
  const RngTree tree{world_seed};
  Benchmark bench;
  bench.config = config;
  bench.world = make_blob_world(tree.derive("centers"), config.classes, config.dim, config.center_scale);
  bench.corruption = make_corruption(tree.derive("corruption"), config.dim, config.shift_strength);
  return bench;
}

LabeledDataset source_train_set(const Benchmark& bench, std::uint64_t seed) {
  return sample_blobs(bench.world, bench.config.train_per_class, bench.config.sigma, seed);
}

LabeledDataset source_holdout_set(const Benchmark& bench, std::uint64_t seed) {
  return sample_blobs(bench.world, bench.config.test_per_class, bench.config.sigma, seed);
}

LabeledDataset target_test_set(const Benchmark& bench, std::uint64_t seed) {
  LabeledDataset clean = sample_blobs(bench.world, bench.config.test_per_class, bench.config.sigma, seed);
  return make_dataset(apply_corruption(clean.features, bench.corruption, mix64(seed)), clean.labels);
}

std::vector<StreamSample> build_stream(const Benchmark& bench, const ScenarioConfig& scenario,
                                       const StreamSeeds& seeds, const Network& net) {
  const LabeledDataset test = target_test_set(bench, seeds.benign);
  const FeatureStats& target_stats = test.stats;
  const std::size_t d = test.dim();
  const std::size_t n_benign = test.size();
  const std::size_t n_noisy = scenario.resolved_noisy_count(n_benign);

  const Tensor benign = normalize_with(test.features, target_stats);

  NoisyContext ctx;
  ctx.world = bench.world;
  ctx.sigma = bench.config.sigma;
  ctx.extra_classes = bench.config.near_classes;
  ctx.corner_scale = bench.config.corner_scale;
  ctx.box_min = Tensor::filled({d}, 0.0);
  ctx.box_max = Tensor::filled({d}, 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    ctx.box_min[c] = ctx.box_max[c] = test.features(0, c);
    for (std::size_t r = 1; r < n_benign; ++r) {
      ctx.box_min[c] = std::min(ctx.box_min[c], test.features(r, c));
      ctx.box_max[c] = std::max(ctx.box_max[c], test.features(r, c));
    }
  }

  Tensor noisy({n_noisy, d});
  switch (scenario.scenario) {
    case Scenario::kBenign:
      break;
    case Scenario::kNear:
      noisy = normalize_with(
          apply_corruption(gen_noisy(Scenario::kNear, n_noisy, d, seeds.noisy, ctx), bench.corruption,
                           mix64(seeds.noisy)),
          target_stats);
      break;
    case Scenario::kFar:
    case Scenario::kNoise:
      noisy = normalize_with(gen_noisy(scenario.scenario, n_noisy, d, seeds.noisy, ctx), target_stats);
      break;
    case Scenario::kAttack: {
      if (n_noisy == 0) break;
      // Malicious rows start as fresh target samples, then each chunk is
      // attacked jointly with a chunk of benign rows.
      const std::size_t per_class = (n_noisy + bench.config.classes - 1) / bench.config.classes;
      LabeledDataset pool = sample_blobs(bench.world, per_class, bench.config.sigma, seeds.noisy);
      Tensor init = normalize_with(apply_corruption(pool.features, bench.corruption, mix64(seeds.noisy)), target_stats);
      std::mt19937_64 rng(seeds.attack);
      std::vector<std::size_t> pool_order(init.rows());
      std::iota(pool_order.begin(), pool_order.end(), 0);
      std::shuffle(pool_order.begin(), pool_order.end(), rng);
      std::vector<std::size_t> benign_order(n_benign);
      std::iota(benign_order.begin(), benign_order.end(), 0);
      std::shuffle(benign_order.begin(), benign_order.end(), rng);

      const std::size_t per_batch = std::max<std::size_t>(1, scenario.attack.benign_per_batch);
      const std::size_t batches = (n_benign + per_batch - 1) / per_batch;
      std::size_t mal_done = 0;
      for (std::size_t b = 0; b < batches; ++b) {
        const std::size_t mal_end = n_noisy * (b + 1) / batches;
        if (mal_end == mal_done) continue;
        const std::size_t ben_begin = b * per_batch, ben_end = std::min(n_benign, ben_begin + per_batch);
        Tensor ben_chunk({ben_end - ben_begin, d});
        for (std::size_t i = ben_begin; i < ben_end; ++i) {
          auto src = benign.row(benign_order[i]);
          std::copy(src.begin(), src.end(), ben_chunk.row(i - ben_begin).begin());
        }
        Tensor mal_chunk({mal_end - mal_done, d});
        for (std::size_t i = mal_done; i < mal_end; ++i) {
          auto src = init.row(pool_order[i]);
          std::copy(src.begin(), src.end(), mal_chunk.row(i - mal_done).begin());
        }
        const Tensor attacked =
            dia_attack(net, ben_chunk, mal_chunk, scenario.attack.epsilon, scenario.attack.alpha, scenario.attack.steps);
        for (std::size_t i = 0; i < attacked.rows(); ++i) {
          auto src = attacked.row(i);
          std::copy(src.begin(), src.end(), noisy.row(mal_done + i).begin());
        }
        mal_done = mal_end;
      }
      break;
    }
  }

  std::vector<StreamSample> benign_samples;
  benign_samples.reserve(n_benign);
  for (std::size_t r = 0; r < n_benign; ++r) {
    benign_samples.emplace_back(slice_rows(benign, r, r + 1), Provenance{test.labels[r], true, scenario.scenario});
  }
  std::vector<StreamSample> noisy_samples;
  noisy_samples.reserve(n_noisy);
  for (std::size_t r = 0; r < n_noisy; ++r) {
    noisy_samples.emplace_back(slice_rows(noisy, r, r + 1), Provenance{-1, false, scenario.scenario});
  }
  return mix_and_shuffle(std::move(benign_samples), std::move(noisy_samples), seeds.shuffle);
}

void write_stream_csv(const std::vector<StreamSample>& stream, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  const std::size_t d = stream.empty() ? 0 : stream.front().features().size();
  out << "label";
  for (std::size_t c = 0; c < d; ++c) out << ",f" << c;
  out << '\n';
  char buf[32];
  for (const auto& s : stream) {
    const Provenance& p = StreamEvaluator::provenance(s);
    out << (p.is_benign ? p.true_label : -1);
    for (double v : s.features().data()) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace sotta
