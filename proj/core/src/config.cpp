#include "sotta/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "sotta/errors.hpp"

namespace sotta {

ConfigError::ConfigError(std::string key, std::size_t line, const std::string& what)
    : std::runtime_error((line ? "line " + std::to_string(line) + ": " : std::string()) +
                         (key.empty() ? std::string() : key + ": ") + what),
      key_(std::move(key)),
      line_(line) {}

NetworkSpec RunConfig::network_spec() const {
  NetworkSpec spec;
  spec.input_dim = bench.dim;
  spec.hidden = hidden;
  spec.classes = bench.classes;
  spec.bn_delta = bn_delta;
  return spec;
}

MethodConfig RunConfig::method_config(const std::string& token) const {
  MethodConfig base;
  base.c0 = resolved_c0();
  base.momentum = momentum;
  base.t0 = t0;
  base.capacity = capacity;
  base.esm = esm;
  return parse_method(token, base);
}

void RunConfig::validate() const {
  try {
    network_spec().validate();
    method_config().validate();
  } catch (const ContractError& e) {
    throw ConfigError("", 0, e.what());
  }
}

namespace {

// Value parsers throw std::invalid_argument; apply_setting adds key and line.

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
    throw std::invalid_argument("expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw std::invalid_argument("expected a non-negative integer, got '" + v + "'");
  return out;
}

std::size_t to_size(const std::string& v, std::size_t min) {
  const std::uint64_t n = to_u64(v);
  if (n < min) throw std::invalid_argument("must be at least " + std::to_string(min));
  return static_cast<std::size_t>(n);
}

double in_range(double x, double lo, double hi, bool hi_open) {
  if (x < lo || x > hi || (hi_open && x == hi)) {
    std::ostringstream os;
    os << "must lie in [" << lo << ", " << hi << (hi_open ? ")" : "]");
    throw std::invalid_argument(os.str());
  }
  return x;
}

double positive(double x) {
  if (!(x > 0.0)) throw std::invalid_argument("must be positive");
  return x;
}

double non_negative(double x) {
  if (!(x >= 0.0)) throw std::invalid_argument("must be non-negative");
  return x;
}

std::string fmt(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

std::string fmt(std::uint64_t x) { return std::to_string(x); }

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SOTTA_DOUBLE(KEY, MEMBER, CHECK) \
  Field{KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = CHECK(to_double(v)); }, \
        [](const RunConfig& c) { return fmt(c.MEMBER); }}
#define SOTTA_SIZE(KEY, MEMBER, MIN) \
  Field{KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = to_size(v, MIN); }, \
        [](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(c.MEMBER)); }}

double unit_closed(double x) { return in_range(x, 0.0, 1.0, false); }
double unit_open(double x) { return in_range(x, 0.0, 1.0, true); }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64(v); },
            [](const RunConfig& c) { return fmt(c.seed); }},
      SOTTA_SIZE("bench.classes", bench.classes, 2),
      SOTTA_SIZE("bench.dim", bench.dim, 2),
      SOTTA_DOUBLE("bench.center_scale", bench.center_scale, positive),
      SOTTA_DOUBLE("bench.sigma", bench.sigma, positive),
      SOTTA_SIZE("bench.train_per_class", bench.train_per_class, 1),
      SOTTA_SIZE("bench.test_per_class", bench.test_per_class, 1),
      SOTTA_DOUBLE("bench.shift_strength", bench.shift_strength, non_negative),
      SOTTA_SIZE("bench.near_classes", bench.near_classes, 1),
      SOTTA_DOUBLE("bench.corner_scale", bench.corner_scale, positive),
      Field{"net.hidden",
            [](RunConfig& c, const std::string& v) {
              std::vector<std::size_t> widths;
              std::stringstream ss(v);
              std::string part;
              while (std::getline(ss, part, ',')) widths.push_back(to_size(trim(part), 1));
              if (widths.empty()) throw std::invalid_argument("needs at least one hidden width");
              c.hidden = widths;
            },
            [](const RunConfig& c) {
              std::string out;
              for (std::size_t w : c.hidden) out += (out.empty() ? "" : ",") + std::to_string(w);
              return out;
            }},
      SOTTA_DOUBLE("net.bn_delta", bn_delta, positive),
      SOTTA_SIZE("pretrain.epochs", pretrain.epochs, 0),
      SOTTA_DOUBLE("pretrain.lr", pretrain.lr, positive),
      SOTTA_SIZE("pretrain.batch_size", pretrain.batch_size, 2),
      SOTTA_DOUBLE("pretrain.bn_momentum", pretrain.bn_momentum, unit_closed),
      Field{"method",
            [](RunConfig& c, const std::string& v) {
              try {
                parse_method(v, MethodConfig{});
              } catch (const ContractError& e) {
                throw std::invalid_argument(e.what());
              }
              c.method = v;
            },
            [](const RunConfig& c) { return c.method; }},
      Field{"adapt.c0",
            [](RunConfig& c, const std::string& v) {
              if (v == "default") {
                c.c0.reset();
              } else {
                c.c0 = unit_open(to_double(v));
              }
            },
            [](const RunConfig& c) { return c.c0 ? fmt(*c.c0) : std::string("default"); }},
      SOTTA_DOUBLE("adapt.m", momentum, unit_closed),
      SOTTA_SIZE("adapt.t0", t0, 1),
      SOTTA_SIZE("adapt.n_mem", capacity, 1),
      SOTTA_DOUBLE("adapt.rho", esm.rho, non_negative),
      SOTTA_DOUBLE("adapt.lr", esm.lr, positive),
      SOTTA_DOUBLE("adapt.grad_floor", esm.grad_floor, non_negative),
      Field{"scenario.name",
            [](RunConfig& c, const std::string& v) {
              try {
                c.scenario.scenario = parse_scenario(v);
              } catch (const ContractError& e) {
                throw std::invalid_argument(e.what());
              }
            },
            [](const RunConfig& c) { return to_string(c.scenario.scenario); }},
      SOTTA_DOUBLE("scenario.noisy_ratio", scenario.noisy_ratio, non_negative),
      Field{"scenario.noisy_count",
            [](RunConfig& c, const std::string& v) {
              if (v == "default") {
                c.scenario.noisy_count.reset();
              } else {
                c.scenario.noisy_count = to_size(v, 0);
              }
            },
            [](const RunConfig& c) {
              return c.scenario.noisy_count ? fmt(static_cast<std::uint64_t>(*c.scenario.noisy_count))
                                            : std::string("default");
            }},
      SOTTA_DOUBLE("attack.epsilon", scenario.attack.epsilon, non_negative),
      SOTTA_DOUBLE("attack.alpha", scenario.attack.alpha, non_negative),
      SOTTA_SIZE("attack.steps", scenario.attack.steps, 1),
      SOTTA_SIZE("attack.benign_per_batch", scenario.attack.benign_per_batch, 1),
  };
  return table;
}

#undef SOTTA_DOUBLE
#undef SOTTA_SIZE

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Field& f : fields()) keys.emplace_back(f.key);
  return keys;
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value, std::size_t line) {
  for (const Field& f : fields()) {
    if (key != f.key) continue;
    try {
      f.set(config, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(key, line, e.what());
    }
    return;
  }
  throw ConfigError(key, line, "unknown key");
}

RunConfig parse_config(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("", line_no, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("", line_no, "missing key");
    if (value.empty()) throw ConfigError(key, line_no, "missing value");
    apply_setting(config, key, value, line_no);
  }
  config.validate();
  return config;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", 0, "cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + " = " + f.get(config) + "\n";
  return out;
}

}  // namespace sotta
