#include "sotta/results.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "sotta/adapters.hpp"

namespace sotta {

namespace {

std::string g6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(part);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

// Hyperparameter columns, used to keep sweep points apart in the report.
std::string hyper_label(const ResultRow& r) {
  return "c0=" + g6(r.c0) + " rho=" + g6(r.rho) + " m=" + g6(r.m) + " t0=" + std::to_string(r.t0) +
         " n_mem=" + std::to_string(r.n_mem) + " ratio=" + g6(r.noisy_ratio);
}

}  // namespace

void sort_rows(std::vector<ResultRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.scenario, a.method, a.seed) < std::tie(b.scenario, b.method, b.seed);
  });
}

std::string format_csv(std::vector<ResultRow> rows) {
  sort_rows(rows);
  std::string out = std::string(kCsvHeader) + "\n";
  for (const ResultRow& r : rows) {
    out += r.scenario + "," + r.method + "," + std::to_string(r.seed) + "," + g6(r.benign_acc) + "," +
           g6(r.noisy_ratio) + "," + g6(r.c0) + "," + g6(r.rho) + "," + g6(r.m) + "," + std::to_string(r.t0) + "," +
           std::to_string(r.n_mem) + "," + std::to_string(r.insertions) + "," + std::to_string(r.skipped_events) +
           "," + g6(r.final_loss) + "\n";
  }
  return out;
}

void write_csv(const std::vector<ResultRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << format_csv(rows);
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<ResultRow> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw std::runtime_error("csv: missing or unexpected header");
  std::vector<ResultRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 13) throw std::runtime_error("csv line " + std::to_string(line_no) + ": expected 13 fields");
    try {
      ResultRow r;
      r.scenario = f[0];
      r.method = f[1];
      r.seed = std::stoull(f[2]);
      r.benign_acc = std::stod(f[3]);
      r.noisy_ratio = std::stod(f[4]);
      r.c0 = std::stod(f[5]);
      r.rho = std::stod(f[6]);
      r.m = std::stod(f[7]);
      r.t0 = std::stoull(f[8]);
      r.n_mem = std::stoull(f[9]);
      r.insertions = std::stoull(f[10]);
      r.skipped_events = std::stoull(f[11]);
      r.final_loss = std::stod(f[12]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw std::runtime_error("csv line " + std::to_string(line_no) + ": bad number");
    }
  }
  return rows;
}

std::vector<ResultRow> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

std::string format_report(const std::vector<ResultRow>& rows) {
  if (rows.empty()) return "no runs\n";
  // A method label gets its hyperparameters appended only when they vary.
  std::map<std::pair<std::string, std::string>, std::set<std::string>> variants;
  for (const ResultRow& r : rows) variants[{r.scenario, r.method}].insert(hyper_label(r));

  std::vector<LabeledResult> labeled;
  for (const ResultRow& r : rows) {
    std::string method = r.method;
    if (variants[{r.scenario, r.method}].size() > 1) method += " [" + hyper_label(r) + "]";
    labeled.push_back(LabeledResult{ResultKey{r.scenario, method}, r.benign_acc});
  }
  const std::vector<SummaryRow> summary = evaluate_result(labeled);

  std::size_t w_scen = 8, w_method = 6;
  for (const SummaryRow& s : summary) {
    w_scen = std::max(w_scen, s.key.scenario.size());
    w_method = std::max(w_method, s.key.method.size());
  }
  std::ostringstream out;
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-*s  %-*s  %5s  %s\n", static_cast<int>(w_scen), "scenario",
                static_cast<int>(w_method), "method", "seeds", "benign acc (%)");
  out << buf;
  for (const SummaryRow& s : summary) {
    std::snprintf(buf, sizeof buf, "%-*s  %-*s  %5zu  %6.2f +- %.2f\n", static_cast<int>(w_scen),
                  s.key.scenario.c_str(), static_cast<int>(w_method), s.key.method.c_str(), s.count, 100.0 * s.mean,
                  100.0 * s.std);
    out << buf;
  }
  return out.str();
}

}  // namespace sotta
