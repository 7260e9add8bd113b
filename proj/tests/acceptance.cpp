// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sotta/esm.hpp"
#include "sotta/gradcheck.hpp"
#include "sotta/memory_bank.hpp"
#include "sotta/sweep.hpp"

using namespace sotta;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. Tape gradients against the extended-precision finite-difference oracle.
void autodiff_oracle() {
  const auto t = Clock::now();
  const GradCheckSuiteReport rep = run_grad_check_suite(100, 0, 1e-5);
  const double secs = seconds_since(t);
  report(1, rep.networks == 100 && rep.worst_rel_err < 1e-4 && secs < 30.0,
         fmt("networks %zu, max rel err %.3e, %.1f s", rep.networks, rep.worst_rel_err, secs));
}

// 2. Perturbation radius, degenerate gradient, and rho = 0 collapse to the plain step.
void epsilon_properties() {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    GradMap g;
    const std::size_t tensors = 1 + rng() % 4;
    for (std::size_t k = 0; k < tensors; ++k) {
      Tensor t({1 + rng() % 8});
      const double scale = std::pow(10.0, 6.0 * u(rng) - 3.0);
      for (double& v : t.data()) v = scale * n(rng);
      g.emplace("p" + std::to_string(k), std::move(t));
    }
    const double rho = 2.0 * u(rng);
    worst = std::max(worst, std::abs(global_norm(epsilon_hat(g, rho)) - rho));
  }
  const GradMap zero = epsilon_hat(GradMap{{"p", Tensor({5})}}, 0.05);
  const bool zero_ok = global_norm(zero) == 0.0;

  double delta_diff = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Network base = init_network(NetworkSpec{16, {64, 64}, 4, 1e-5}, seed);
    Network a = base, b = base;
    AdamState sa, sb;
    EsmConfig cfg;
    cfg.rho = 0.0;
    Tensor x({32, 16});
    for (double& v : x.data()) v = n(rng);
    esm_step(a, x, cfg, sa);
    em_step(b, x, cfg, sb);
    for (const auto& [name, p] : base.params()) {
      const Tensor& va = a.params().value(name);
      const Tensor& vb = b.params().value(name);
      for (std::size_t i = 0; i < va.size(); ++i)
        delta_diff = std::max(delta_diff, std::abs((va[i] - p.value[i]) - (vb[i] - p.value[i])));
    }
  }
  report(2, worst < 1e-9 && zero_ok && delta_diff < 1e-15,
         fmt("max | ||eps|| - rho | %.2e, zero-gradient eps %s, rho=0 delta diff %.2e", worst,
             zero_ok ? "zero" : "NONZERO", delta_diff));
}

// 3. Memory invariants under random insert sequences.
void memory_invariants() {
  std::mt19937_64 rng(3);
  std::size_t violations = 0, ops = 0;
  for (double c0 : {0.0, 0.66, 0.99}) {
    for (int bank_id = 0; bank_id < 5; ++bank_id) {
      const std::size_t classes = 2 + rng() % 9, capacity = 1 + rng() % 64;
      MemoryBank bank(capacity, classes, rng());
      std::uniform_int_distribution<std::size_t> label(0, classes - 1);
      std::uniform_real_distribution<double> conf(1.0 / static_cast<double>(classes), 1.0);
      const int steps = bank_id < 4 ? 667 : 10000 / 3 - 4 * 667 + 1;
      for (int s = 0; s < steps; ++s, ++ops) {
        const int y = static_cast<int>(label(rng));
        // Put some mass exactly on the threshold to exercise the strict inequality.
        const double c = (rng() % 10 == 0) ? c0 : conf(rng);
        const bool was_full = bank.full();
        const std::set<int> prevalent = bank.empty() ? std::set<int>{} : bank.prevalent_classes();
        const std::vector<std::size_t> before = bank.class_counts();
        const std::size_t max_before = before.empty() ? 0 : *std::max_element(before.begin(), before.end());
        Tensor x({1, 3});
        x[0] = static_cast<double>(ops);
        bank.maybe_insert(x, y, c, c0);

        std::vector<std::size_t> recount(classes, 0);
        for (const MemoryItem& it : bank.items()) {
          ++recount[it.predicted_label];
          if (!(it.confidence > c0)) ++violations;
        }
        if (bank.size() > capacity || recount != bank.class_counts()) ++violations;
        if (was_full && bank.size() != capacity) ++violations;
        if (was_full && c > c0) {
          const auto& after = bank.class_counts();
          const std::size_t max_after = *std::max_element(after.begin(), after.end());
          if (!prevalent.contains(y) && max_after > max_before) ++violations;
          if (prevalent.contains(y) && after != before) ++violations;
        }
      }
    }
  }
  report(3, violations == 0 && ops >= 10000, fmt("%zu inserts, %zu violations", ops, violations));
}

// 4. Closed form of repeated moving-average updates.
void ema_exactness() {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 2.0);
  double worst = 0.0;
  for (double m : {0.05, 0.2, 0.3, 1.0}) {
    for (int trial = 0; trial < 20; ++trial) {
      Network net(NetworkSpec{3, {5}, 2, 1e-5});
      BnStats& run = net.running_stats()[0];
      BnStats target{Tensor({5}), Tensor({5})};
      for (std::size_t i = 0; i < 5; ++i) {
        run.mean[i] = n(rng);
        run.var[i] = std::abs(n(rng));
        target.mean[i] = n(rng);
        target.var[i] = std::abs(n(rng));
      }
      const BnStats start = run;
      const int k = 1 + static_cast<int>(rng() % 60);
      for (int step = 0; step < k; ++step) ema_update(net, {target}, m);
      const double decay = std::pow(1.0 - m, k);
      for (std::size_t i = 0; i < 5; ++i) {
        worst = std::max(worst, std::abs(net.running_stats()[0].mean[i] -
                                         (target.mean[i] + decay * (start.mean[i] - target.mean[i]))));
        worst = std::max(worst, std::abs(net.running_stats()[0].var[i] -
                                         (target.var[i] + decay * (start.var[i] - target.var[i]))));
      }
    }
  }
  report(4, worst < 1e-12, fmt("max deviation from closed form %.2e", worst));
}

struct Runs {
  std::map<std::string, std::vector<RunOutcome>> by_method;  // seeds 0, 1, 2 in order

  double mean_acc(const std::string& m) const { return mean(m, [](const RunOutcome& o) { return o.row.benign_acc; }); }
  double mean(const std::string& m, auto f) const {
    double s = 0.0;
    for (const RunOutcome& o : by_method.at(m)) s += f(o);
    return s / static_cast<double>(by_method.at(m).size());
  }
};

Runs run_all(const RunConfig& cfg, const Network& net, Scenario scenario, const std::vector<std::string>& methods) {
  std::vector<std::future<RunOutcome>> jobs;
  for (const std::string& m : methods)
    for (std::uint64_t seed : {0, 1, 2})
      jobs.push_back(std::async(std::launch::async, [&, m, seed] { return execute_run(cfg, net, scenario, m, seed); }));
  Runs out;
  std::size_t i = 0;
  for (const std::string& m : methods)
    for (int s = 0; s < 3; ++s) out.by_method[m].push_back(jobs[i++].get());
  return out;
}

const std::vector<std::string> kAblations{"em",          "ablation:hc",    "ablation:uc",     "ablation:esm",
                                          "ablation:hc+uc", "ablation:hc+esm", "ablation:uc+esm", "sotta"};

void desk_scale(const Network& net, double pretrain_secs) {
  RunConfig cfg;  // K=4, d=16, shift 1.5, 2000 benign, 1:1 uniform noise
  std::vector<std::string> methods = kAblations;
  methods.push_back("source");
  const auto t = Clock::now();
  const Runs noise = run_all(cfg, net, Scenario::kNoise, methods);
  const double secs = seconds_since(t) + pretrain_secs;

  const double src = noise.mean_acc("source"), em = noise.mean_acc("em"), sotta = noise.mean_acc("sotta");
  report(5, sotta >= src + 0.03 && sotta >= em + 0.05 && secs < 120.0,
         fmt("noise: sotta %.2f, source %.2f, em %.2f (needs >= source+3 and >= em+5), %.1f s", 100 * sotta,
             100 * src, 100 * em, secs));

  RunConfig benign_cfg = cfg;
  benign_cfg.scenario.noisy_count = 0;
  const Runs benign = run_all(benign_cfg, net, Scenario::kBenign, {"sotta", "em"});
  const double b_sotta = benign.mean_acc("sotta"), b_em = benign.mean_acc("em");
  report(6, b_sotta >= b_em - 0.02, fmt("benign: sotta %.2f, em %.2f (needs >= em-2)", 100 * b_sotta, 100 * b_em));

  const auto grad = [](const RunOutcome& o) { return o.result.mean_noisy_grad_norm; };
  const double g_sotta = noise.mean("sotta", grad), g_em = noise.mean("em", grad);
  report(7, g_sotta > g_em, fmt("noisy-window entropy grad norm: sotta %.4f, em %.4f", g_sotta, g_em));

  const auto noisy_share = [](const RunOutcome& o) {
    return o.result.insertions ? static_cast<double>(o.result.noisy_insertions) / o.result.insertions : 0.0;
  };
  const double share = noise.mean("sotta", noisy_share);
  report(8, share < 0.05, fmt("noisy share of memory insertions at c0=0.99: %.2f%% (needs < 5%%)", 100 * share));

  std::set<std::string> distinct;
  std::size_t rows = 0;
  for (const std::string& m : kAblations)
    for (const RunOutcome& o : noise.by_method.at(m)) {
      ResultRow r = o.row;
      r.method.clear();  // distinct by content, not just by label
      distinct.insert(format_csv({r}));
      ++rows;
    }
  std::string detail = fmt("%zu/%zu distinct rows; sotta %.2f", distinct.size(), rows, 100 * sotta);
  bool dominates = true;
  for (const char* single : {"ablation:hc", "ablation:uc", "ablation:esm"}) {
    const double a = noise.mean_acc(single);
    dominates &= sotta >= a - 0.01;
    detail += fmt(", %s %.2f", single, 100 * a);
  }
  report(9, distinct.size() == rows && dominates, detail + " (needs sotta >= each single - 1)");
}

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 10. Same sweep CSV with one and four worker threads.
void cli_determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("sotta_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cli = SOTTA_CLI_PATH, ckpt = (dir / "model.ckpt").string();
  bool ok = shell(cli + " pretrain --out " + ckpt + " >/dev/null") == 0;
  const std::string sweep = " sweep --ckpt " + ckpt + " --scenarios noise,benign --methods sotta,em --seeds 0,1,2";
  ok = ok && shell("SOTTA_THREADS=1 " + cli + sweep + " --out-csv " + (dir / "t1.csv").string() + " >/dev/null") == 0;
  ok = ok && shell("SOTTA_THREADS=4 " + cli + sweep + " --out-csv " + (dir / "t4.csv").string() + " >/dev/null") == 0;
  const std::string a = slurp(dir / "t1.csv"), b = slurp(dir / "t4.csv");
  const auto rows = static_cast<std::size_t>(std::count(a.begin(), a.end(), '\n'));
  report(10, ok && !a.empty() && a == b && rows == 13,
         fmt("%zu data rows, csv %s", rows ? rows - 1 : 0, a == b ? "byte-identical" : "DIFFERS"));
  fs::remove_all(dir);
}

}  // namespace

int main() {
  autodiff_oracle();
  epsilon_properties();
  memory_invariants();
  ema_exactness();
  const auto t = Clock::now();
  const Network net = pretrain_from_config(RunConfig{});
  desk_scale(net, seconds_since(t));
  cli_determinism();
  std::printf("%d of 10 criteria failed\n", failures);
  return failures ? 1 : 0;
}
