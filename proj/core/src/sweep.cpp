#include "sotta/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>

#include "sotta/seeds.hpp"

namespace sotta {

Benchmark benchmark_for(const RunConfig& config) {
  return make_benchmark(config.bench, RngTree{config.seed}.derive("world"));
}

Network pretrain_from_config(const RunConfig& config, TrainingLog* log) {
  const RngTree tree{config.seed};
  const Benchmark bench = benchmark_for(config);
  Network net = init_network(config.network_spec(), tree.derive("init"));
  PretrainConfig pc = config.pretrain;
  pc.seed = tree.derive("pretrain");
  const LabeledDataset train = source_train_set(bench, tree.derive("source"));
  const LabeledDataset holdout = source_holdout_set(bench, tree.derive("holdout"));
  TrainingLog out = pretrain_source(net, train, pc, &holdout);
  if (log) *log = std::move(out);
  return net;
}

StreamSeeds stream_seeds(std::uint64_t run_seed) {
  const RngTree tree{run_seed};
  return StreamSeeds{tree.derive("stream"), tree.derive("noisy"), tree.derive("attack"), tree.derive("shuffle")};
}

RunOutcome execute_run(const RunConfig& config, const Network& checkpoint, Scenario scenario,
                       const std::string& token, std::uint64_t seed) {
  const MethodConfig method = config.method_config(token);
  ScenarioConfig sc = config.scenario;
  sc.scenario = scenario;
  const Benchmark bench = benchmark_for(config);
  const std::vector<StreamSample> stream = build_stream(bench, sc, stream_seeds(seed), checkpoint);

  RunOutcome out;
  out.result = run_stream(checkpoint, stream, method, seed);
  std::size_t benign = 0;
  for (const StreamSample& s : stream) benign += StreamEvaluator::provenance(s).is_benign;

  ResultRow& row = out.row;
  row.scenario = to_string(scenario);
  row.method = method_token(method);
  row.seed = seed;
  row.benign_acc = out.result.benign_accuracy;
  row.noisy_ratio = benign ? static_cast<double>(stream.size() - benign) / static_cast<double>(benign) : 0.0;
  row.c0 = method.c0;
  row.rho = method.esm.rho;
  row.m = method.momentum;
  row.t0 = method.t0;
  row.n_mem = method.capacity;
  row.insertions = out.result.insertions;
  row.skipped_events = out.result.skipped_events;
  row.final_loss = out.result.final_loss;
  return out;
}

std::vector<RunRequest> expand_grid(const RunConfig& base, const std::vector<std::string>& scenarios,
                                    const std::vector<std::string>& methods, const std::vector<std::uint64_t>& seeds,
                                    const std::string& sweep_key, const std::vector<std::string>& sweep_values) {
  std::vector<RunConfig> configs;
  if (sweep_key.empty()) {
    configs.push_back(base);
  } else {
    for (const std::string& v : sweep_values) {
      RunConfig c = base;
      apply_setting(c, sweep_key, v);
      c.validate();
      configs.push_back(std::move(c));
    }
  }
  std::vector<RunRequest> out;
  for (const RunConfig& c : configs)
    for (const std::string& s : scenarios)
      for (const std::string& m : methods) {
        c.method_config(m);  // reject unknown tokens before any work starts
        for (std::uint64_t seed : seeds) out.push_back(RunRequest{c, parse_scenario(s), m, seed});
      }
  return out;
}

std::vector<ResultRow> run_sweep(const std::vector<RunRequest>& requests, const Network& checkpoint,
                                 std::size_t threads) {
  std::vector<ResultRow> rows(requests.size());
  std::vector<std::exception_ptr> errors(requests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < requests.size(); i = next++) {
      try {
        const RunRequest& r = requests[i];
        rows[i] = execute_run(r.config, checkpoint, r.scenario, r.method, r.seed).row;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(threads, requests.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
  sort_rows(rows);
  return rows;
}

std::size_t threads_from_env() {
  if (const char* env = std::getenv("SOTTA_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace sotta
