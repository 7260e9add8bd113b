#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sotta {

/// One run, one CSV line.
struct ResultRow {
  std::string scenario;
  std::string method;
  std::uint64_t seed = 0;
  double benign_acc = 0.0;
  double noisy_ratio = 0.0;
  double c0 = 0.0;
  double rho = 0.0;
  double m = 0.0;
  std::size_t t0 = 0;
  std::size_t n_mem = 0;
  std::size_t insertions = 0;
  std::size_t skipped_events = 0;
  double final_loss = 0.0;
  bool operator==(const ResultRow&) const = default;
};

inline constexpr const char* kCsvHeader =
    "scenario,method,seed,benign_acc,noisy_ratio,c0,rho,m,t0,n_mem,insertions,skipped_events,final_loss";

/// Stable sort by (scenario, method, seed).
void sort_rows(std::vector<ResultRow>& rows);
/// Header plus sorted rows; floats with 6 significant digits.
std::string format_csv(std::vector<ResultRow> rows);
/// Throws std::runtime_error when the file cannot be written.
void write_csv(const std::vector<ResultRow>& rows, const std::string& path);
/// Inverse of format_csv. Throws std::runtime_error on a malformed line.
std::vector<ResultRow> parse_csv(const std::string& text);
std::vector<ResultRow> read_csv(const std::string& path);

/// Plaintext table of benign accuracy mean and population std (in percent)
/// per scenario and method. Rows that differ in a hyperparameter column are
/// kept apart and labeled with it.
std::string format_report(const std::vector<ResultRow>& rows);

}  // namespace sotta
