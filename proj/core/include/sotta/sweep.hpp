#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sotta/adapters.hpp"
#include "sotta/config.hpp"
#include "sotta/results.hpp"

namespace sotta {

/// Benchmark world of a config: centers and target shift from the master seed.
Benchmark benchmark_for(const RunConfig& config);

/// Source model for a config, trained on the source split of benchmark_for.
Network pretrain_from_config(const RunConfig& config, TrainingLog* log = nullptr);

/// Per-run stream seeds from the run seed. The scenario does not enter, so
/// the benign part of a stream is the same in every scenario.
StreamSeeds stream_seeds(std::uint64_t run_seed);

struct RunOutcome {
  ResultRow row;
  StreamResult result;
};

/// One (scenario, method, seed) run of `checkpoint` under `config`.
RunOutcome execute_run(const RunConfig& config, const Network& checkpoint, Scenario scenario,
                       const std::string& token, std::uint64_t seed);

struct RunRequest {
  RunConfig config;
  Scenario scenario = Scenario::kBenign;
  std::string method;
  std::uint64_t seed = 0;
};

/// Cartesian product scenario x method x seed (x sweep value when
/// `sweep_key` is non-empty; each value is applied with apply_setting).
std::vector<RunRequest> expand_grid(const RunConfig& base, const std::vector<std::string>& scenarios,
                                    const std::vector<std::string>& methods, const std::vector<std::uint64_t>& seeds,
                                    const std::string& sweep_key = {},
                                    const std::vector<std::string>& sweep_values = {});

/// Runs every request on up to `threads` workers. Each run owns its model
/// copy and seeds, so the rows (sorted) do not depend on `threads`.
std::vector<ResultRow> run_sweep(const std::vector<RunRequest>& requests, const Network& checkpoint,
                                 std::size_t threads);

/// SOTTA_THREADS when set to a positive integer, else the core count.
std::size_t threads_from_env();

}  // namespace sotta
