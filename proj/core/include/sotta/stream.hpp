#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sotta/dataset.hpp"
#include "sotta/network.hpp"
#include "sotta/tensor.hpp"

namespace sotta {

enum class Scenario { kBenign, kNear, kFar, kAttack, kNoise };

std::string to_string(Scenario scenario);
/// Accepts benign, near, far, attack, noise (case-insensitive).
Scenario parse_scenario(const std::string& name);

// ---------------------------------------------------------------------------
// Source / target data

/// Class centers on a sphere of radius center_scale.
struct BlobWorld {
  Tensor centers;  // K x d
  double center_scale = 4.0;
};

BlobWorld make_blob_world(std::uint64_t seed, std::size_t classes, std::size_t dim, double center_scale);
/// n_per_class isotropic Gaussian draws around every center, rows grouped by class.
LabeledDataset sample_blobs(const BlobWorld& world, std::size_t n_per_class, double sigma, std::uint64_t seed);
/// One-shot world + sample. Throws ContractError for n_per_class == 0.
LabeledDataset gen_blobs(std::uint64_t seed, std::size_t classes, std::size_t dim, std::size_t n_per_class,
                         double center_scale = 4.0, double sigma = 1.0);

/// Fixed distribution shift x -> A x + offset + N(0, noise_sigma^2) with
/// A = B^T G S B: per-axis scaling S and a small plane rotation G, both in a
/// random orthonormal frame B. Scaling in a rotated frame mixes features, so
/// per-feature standardization of the target cannot undo it.
struct Corruption {
  Tensor transform;  // d x d
  Tensor offset;     // d
  double noise_sigma = 0.0;
  bool identity = true;
};

Corruption make_corruption(std::uint64_t seed, std::size_t dim, double shift_strength);
Tensor apply_corruption(const Tensor& features, const Corruption& corruption, std::uint64_t noise_seed);
/// Labels preserved; strength 0 returns the features untouched.
LabeledDataset corrupt(const LabeledDataset& data, std::uint64_t seed, double shift_strength);

// ---------------------------------------------------------------------------
// Noisy samples

struct NoisyContext {
  BlobWorld world;           // training class centers
  double sigma = 1.0;        // within-class spread
  std::size_t extra_classes = 4;
  double corner_scale = 4.0;
  Tensor box_min;            // per-feature range of the benign test set
  Tensor box_max;
};

/// Minimum distance from a Near center to every training center, in units of sigma.
inline constexpr double kNearCenterGap = 3.0;

/// Fresh class centers at least kNearCenterGap * sigma from every training center.
Tensor make_near_centers(const NoisyContext& ctx, std::uint64_t seed);

/// Near: blobs around unseen centers. Far: +/-corner_scale on a random
/// ceil(d/4) subset of coordinates plus small noise. Noise: uniform over the
/// benign bounding box. Attack is not generated here (see dia_attack).
Tensor gen_noisy(Scenario scenario, std::size_t n, std::size_t dim, std::uint64_t seed, const NoisyContext& ctx);

struct AttackConfig {
  double epsilon = 0.5;
  double alpha = 0.05;
  std::size_t steps = 10;
  /// Benign rows per joint batch when attacking a stream.
  std::size_t benign_per_batch = 32;
  bool operator==(const AttackConfig&) const = default;
};

/// Sign-gradient ascent on the malicious rows of a joint batch normalized
/// with its own batch statistics, maximizing the cross-entropy of the benign
/// rows against their pre-attack predictions. The result stays within an
/// L-infinity ball of radius epsilon around malicious_init.
Tensor dia_attack(const Network& net, const Tensor& benign_batch, const Tensor& malicious_init, double epsilon,
                  double alpha, std::size_t steps);

/// Accuracy on the benign rows of a joint batch under batch statistics.
double joint_batch_accuracy(const Network& net, const Tensor& benign, const std::vector<int>& labels,
                            const Tensor& others);

// ---------------------------------------------------------------------------
// Stream assembly

struct Provenance {
  int true_label = -1;
  bool is_benign = false;
  Scenario scenario = Scenario::kBenign;
  bool operator==(const Provenance&) const = default;
};

class StreamEvaluator;

/// One test-time input. Only the evaluator can read the hidden provenance;
/// adaptation code sees features().
class StreamSample {
 public:
  StreamSample(Tensor features, Provenance provenance)
      : features_(std::move(features)), provenance_(provenance) {}

  const Tensor& features() const { return features_; }

 private:
  friend class StreamEvaluator;
  Tensor features_;
  Provenance provenance_;
};

class StreamEvaluator {
 public:
  static const Provenance& provenance(const StreamSample& s) { return s.provenance_; }
  static Provenance& mutable_provenance(StreamSample& s) { return s.provenance_; }
};

/// Seeded Fisher-Yates permutation of benign ++ noisy.
std::vector<StreamSample> mix_and_shuffle(std::vector<StreamSample> benign, std::vector<StreamSample> noisy,
                                          std::uint64_t seed);

struct ScenarioConfig {
  Scenario scenario = Scenario::kBenign;
  /// Noisy samples per benign sample; ignored when noisy_count is set.
  double noisy_ratio = 1.0;
  std::optional<std::size_t> noisy_count;
  AttackConfig attack;

  std::size_t resolved_noisy_count(std::size_t benign_count) const;
  bool operator==(const ScenarioConfig&) const = default;
};

/// Geometry of the synthetic benchmark.
struct BenchmarkConfig {
  std::size_t classes = 4;
  std::size_t dim = 16;
  double center_scale = 4.0;
  double sigma = 1.0;
  std::size_t train_per_class = 500;
  std::size_t test_per_class = 500;
  double shift_strength = 1.5;
  std::size_t near_classes = 4;
  double corner_scale = 4.0;
  bool operator==(const BenchmarkConfig&) const = default;
};

struct StreamSeeds {
  std::uint64_t benign = 1;
  std::uint64_t noisy = 2;
  std::uint64_t attack = 3;
  std::uint64_t shuffle = 4;
};

/// Everything fixed by the world seed: class centers and the target shift.
struct Benchmark {
  BenchmarkConfig config;
  BlobWorld world;
  Corruption corruption;
};

Benchmark make_benchmark(const BenchmarkConfig& config, std::uint64_t world_seed);
LabeledDataset source_train_set(const Benchmark& bench, std::uint64_t seed);
/// Clean (unshifted) holdout from the source distribution.
LabeledDataset source_holdout_set(const Benchmark& bench, std::uint64_t seed);
/// Shifted target test set in raw feature units.
LabeledDataset target_test_set(const Benchmark& bench, std::uint64_t seed);

/// Benign target samples plus the scenario's noisy samples, all normalized
/// with the benign test set's statistics, then shuffled. The network is only
/// used by the Attack scenario.
std::vector<StreamSample> build_stream(const Benchmark& bench, const ScenarioConfig& scenario,
                                       const StreamSeeds& seeds, const Network& net);

/// CSV dump with header label,f0..f{d-1}; noisy rows carry label -1.
void write_stream_csv(const std::vector<StreamSample>& stream, const std::string& path);

}  // namespace sotta
