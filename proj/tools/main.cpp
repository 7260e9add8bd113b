// sotta: pretrain a source model, adapt it on synthetic noisy streams, and
// tabulate the results.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "sotta/checkpoint.hpp"
#include "sotta/config.hpp"
#include "sotta/errors.hpp"
#include "sotta/gradcheck.hpp"
#include "sotta/results.hpp"
#include "sotta/sweep.hpp"

namespace {

constexpr int kUsageError = 1;
constexpr int kInternalError = 2;

// Raised for mistakes in the command line or config; maps to exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

sotta::RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  sotta::RunConfig cfg;
  try {
    if (!path.empty()) cfg = sotta::load_config_file(path);
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
      sotta::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
  } catch (const sotta::ConfigError& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

sotta::Network load_model(const std::string& path, const sotta::RunConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sotta::load_checkpoint(bytes, cfg.network_spec());
}

void write_events(const sotta::StreamResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "step,cumulative_accuracy,skipped,loss_before,loss_after,grad_norm,noisy_grad_norm,memory_size\n";
  char buf[256];
  for (const sotta::EventLog& e : result.events) {
    std::snprintf(buf, sizeof buf, "%zu,%.6g,%d,%.6g,%.6g,%.6g,%.6g,%zu\n", e.step, e.cumulative_accuracy,
                  e.skipped ? 1 : 0, e.loss_before, e.loss_after, e.grad_norm, e.noisy_grad_norm, e.memory_size);
    out << buf;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming test-time adaptation with confident, class-balanced memory and sharpness-aware entropy steps"};
  app.require_subcommand(1);

  std::string config_path, ckpt_path, out_path, csv_path, events_path, in_csv;
  std::vector<std::string> overrides;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", overrides, "override one config key (key=value), repeatable");
  };

  auto* pretrain = app.add_subcommand("pretrain", "train the source model and write a checkpoint");
  add_config(pretrain);
  pretrain->add_option("--out", out_path, "checkpoint path")->required();

  std::string scenario = "noise", method;
  std::uint64_t seed = 0;
  auto* run = app.add_subcommand("run", "adapt a checkpoint on one stream");
  add_config(run);
  run->add_option("--ckpt", ckpt_path, "checkpoint from pretrain")->required()->check(CLI::ExistingFile);
  run->add_option("--scenario", scenario, "benign, near, far, attack or noise");
  run->add_option("--method", method, "source, bn_stats, em, sotta or ablation:<flags>");
  run->add_option("--seed", seed, "run seed");
  run->add_option("--out-csv", csv_path, "result CSV")->required();
  run->add_option("--events-csv", events_path, "per-event log CSV");

  std::vector<std::string> scenarios{"noise"}, methods{"sotta"}, sweep_values;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::string sweep_key;
  auto* sweep = app.add_subcommand("sweep", "run scenario x method x seed grids");
  add_config(sweep);
  sweep->add_option("--ckpt", ckpt_path, "checkpoint from pretrain")->required()->check(CLI::ExistingFile);
  sweep->add_option("--scenarios", scenarios, "comma-separated scenarios")->delimiter(',');
  sweep->add_option("--methods", methods, "comma-separated method tokens")->delimiter(',');
  sweep->add_option("--seeds", seeds, "comma-separated run seeds")->delimiter(',');
  sweep->add_option("--sweep-key", sweep_key, "config key to vary");
  sweep->add_option("--sweep-values", sweep_values, "comma-separated values for --sweep-key")->delimiter(',');
  sweep->add_option("--out-csv", csv_path, "result CSV")->required();

  std::size_t gc_count = 100;
  std::uint64_t gc_seed = 0;
  double gc_step = 1e-5;
  auto* gradcheck = app.add_subcommand("gradcheck", "compare tape gradients with finite differences");
  gradcheck->add_option("--count", gc_count, "random networks to check");
  gradcheck->add_option("--seed", gc_seed, "seed of the random networks");
  gradcheck->add_option("--step", gc_step, "central difference step");

  auto* report = app.add_subcommand("report", "print mean and std per scenario and method");
  report->add_option("--in-csv", in_csv, "result CSV")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*pretrain) {
      const sotta::RunConfig cfg = load_config(config_path, overrides);
      sotta::TrainingLog log;
      const sotta::Network net = sotta::pretrain_from_config(cfg, &log);
      sotta::write_checkpoint_file(net, out_path);
      std::printf("train accuracy %.4f, source holdout accuracy %.4f, fingerprint %08x\n", log.train_accuracy,
                  log.holdout_accuracy, sotta::network_fingerprint(net));
    } else if (*run) {
      const sotta::RunConfig cfg = load_config(config_path, overrides);
      const sotta::Network net = load_model(ckpt_path, cfg);
      sotta::Scenario sc;
      try {
        sc = sotta::parse_scenario(scenario);
        cfg.method_config(method.empty() ? cfg.method : method);
      } catch (const std::exception& e) {
        throw UsageError(e.what());
      }
      const sotta::RunOutcome out =
          sotta::execute_run(cfg, net, sc, method.empty() ? cfg.method : method, seed);
      sotta::write_csv({out.row}, csv_path);
      if (!events_path.empty()) write_events(out.result, events_path);
      std::printf("%s %s seed %llu: benign accuracy %.4f\n", out.row.scenario.c_str(), out.row.method.c_str(),
                  static_cast<unsigned long long>(seed), out.row.benign_acc);
    } else if (*sweep) {
      const sotta::RunConfig cfg = load_config(config_path, overrides);
      const sotta::Network net = load_model(ckpt_path, cfg);
      if (!sweep_key.empty() && sweep_values.empty()) throw UsageError("--sweep-key needs --sweep-values");
      std::vector<sotta::RunRequest> requests;
      try {
        requests = sotta::expand_grid(cfg, scenarios, methods, seeds, sweep_key, sweep_values);
      } catch (const sotta::ConfigError& e) {
        throw UsageError(e.what());
      } catch (const std::logic_error& e) {
        throw UsageError(e.what());
      }
      const std::vector<sotta::ResultRow> rows = sotta::run_sweep(requests, net, sotta::threads_from_env());
      sotta::write_csv(rows, csv_path);
      std::printf("%zu runs written to %s\n", rows.size(), csv_path.c_str());
    } else if (*gradcheck) {
      const sotta::GradCheckSuiteReport rep = sotta::run_grad_check_suite(gc_count, gc_seed, gc_step);
      const bool ok = rep.worst_rel_err < 1e-4;
      std::printf("networks %zu, max relative error %.3e (%s)\n", rep.networks, rep.worst_rel_err,
                  ok ? "ok" : "FAILED");
      return ok ? 0 : kInternalError;
    } else if (*report) {
      std::fputs(sotta::format_report(sotta::read_csv(in_csv)).c_str(), stdout);
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsageError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInternalError;
  }
  return 0;
}
