#include "sotta/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "sotta/errors.hpp"

namespace sotta {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

struct NamedTensor {
  std::string name;
  Tensor value;
};

std::vector<NamedTensor> collect(const Network& net) {
  std::vector<NamedTensor> out;
  for (const auto& [name, p] : net.params()) out.push_back({name, p.value});
  for (std::size_t i = 0; i < net.bn_layers(); ++i) {
    out.push_back({"bn" + std::to_string(i) + ".running_mean", net.running_stats()[i].mean});
    out.push_back({"bn" + std::to_string(i) + ".running_var", net.running_stats()[i].var});
  }
  out.push_back({"input.mean", net.source_stats().mean});
  out.push_back({"input.std", net.source_stats().std});
  return out;
}

std::uint32_t crc_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return out.str();
}

// Reads one '\n'-terminated header line; throws on truncation.
std::string next_line(std::string_view bytes, std::size_t& pos) {
  const auto nl = bytes.find('\n', pos);
  if (nl == std::string_view::npos) throw CheckpointError("checkpoint truncated inside header");
  std::string line(bytes.substr(pos, nl - pos));
  pos = nl + 1;
  return line;
}

std::istringstream expect_key(std::string_view bytes, std::size_t& pos, const std::string& key) {
  std::istringstream in(next_line(bytes, pos));
  std::string got;
  in >> got;
  if (got != key) throw CheckpointError("checkpoint header: expected '" + key + "', found '" + got + "'");
  return in;
}

template <typename T>
T read_value(std::istringstream& in, const std::string& key) {
  T v{};
  if (!(in >> v)) throw CheckpointError("checkpoint header: bad value for '" + key + "'");
  return v;
}

}  // namespace

std::string save_checkpoint(const Network& net) {
  const auto tensors = collect(net);
  std::string payload;
  for (const auto& t : tensors) {
    const auto data = t.value.data();
    payload.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(double));
  }

  const NetworkSpec& spec = net.spec();
  std::ostringstream header;
  header << kCheckpointMagic;
  header << "input_dim " << spec.input_dim << '\n';
  header << "hidden " << spec.hidden.size();
  for (auto w : spec.hidden) header << ' ' << w;
  header << '\n';
  header << "classes " << spec.classes << '\n';
  header << "delta " << format_double(spec.bn_delta) << '\n';
  header << "tensors " << tensors.size() << '\n';
  for (const auto& t : tensors) {
    header << "tensor " << t.name << ' ' << t.value.rank();
    for (auto d : t.value.shape()) header << ' ' << d;
    header << '\n';
  }
  header << "crc32 " << std::hex << std::setw(8) << std::setfill('0') << crc_of(payload) << std::dec << '\n';
  header << "payload_bytes " << payload.size() << '\n';
  header << "end\n";
  return header.str() + payload;
}

Network load_checkpoint(std::string_view bytes) {
  if (bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw CheckpointError("not a checkpoint: bad magic or unsupported version");
  }
  std::size_t pos = kCheckpointMagic.size();

  NetworkSpec spec;
  {
    auto in = expect_key(bytes, pos, "input_dim");
    spec.input_dim = read_value<std::size_t>(in, "input_dim");
  }
  {
    auto in = expect_key(bytes, pos, "hidden");
    const auto n = read_value<std::size_t>(in, "hidden");
    spec.hidden.clear();
    for (std::size_t i = 0; i < n; ++i) spec.hidden.push_back(read_value<std::size_t>(in, "hidden"));
  }
  {
    auto in = expect_key(bytes, pos, "classes");
    spec.classes = read_value<std::size_t>(in, "classes");
  }
  {
    auto in = expect_key(bytes, pos, "delta");
    spec.bn_delta = read_value<double>(in, "delta");
  }
  std::vector<std::pair<std::string, Shape>> layout;
  {
    auto in = expect_key(bytes, pos, "tensors");
    const auto n = read_value<std::size_t>(in, "tensors");
    for (std::size_t i = 0; i < n; ++i) {
      auto line = expect_key(bytes, pos, "tensor");
      auto name = read_value<std::string>(line, "tensor");
      const auto rank = read_value<std::size_t>(line, "tensor rank");
      Shape shape;
      for (std::size_t r = 0; r < rank; ++r) shape.push_back(read_value<std::size_t>(line, "tensor dim"));
      layout.emplace_back(std::move(name), std::move(shape));
    }
  }
  std::uint32_t expected_crc = 0;
  {
    auto in = expect_key(bytes, pos, "crc32");
    in >> std::hex >> expected_crc;
    if (!in) throw CheckpointError("checkpoint header: bad crc32");
  }
  std::size_t payload_bytes = 0;
  {
    auto in = expect_key(bytes, pos, "payload_bytes");
    payload_bytes = read_value<std::size_t>(in, "payload_bytes");
  }
  expect_key(bytes, pos, "end");

  const std::string_view payload = bytes.substr(pos);
  if (payload.size() != payload_bytes) {
    throw CheckpointError("checkpoint payload is " + std::to_string(payload.size()) + " bytes, header says " +
                          std::to_string(payload_bytes));
  }
  if (crc_of(payload) != expected_crc) throw CheckpointError("checkpoint checksum mismatch");

  try {
    spec.validate();
  } catch (const ContractError& e) {
    throw CheckpointError(std::string("checkpoint spec invalid: ") + e.what());
  }
  Network net(spec);
  const auto reference = collect(net);
  if (reference.size() != layout.size()) throw CheckpointError("checkpoint tensor count does not match its spec");

  std::size_t offset = 0;
  std::vector<Tensor> loaded;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& [name, shape] = layout[i];
    if (name != reference[i].name || shape != reference[i].value.shape()) {
      throw CheckpointError("checkpoint tensor '" + name + "' does not match the layout of its spec");
    }
    const std::size_t n = shape_numel(shape);
    if (offset + n * sizeof(double) > payload.size()) throw CheckpointError("checkpoint payload truncated");
    std::vector<double> data(n);
    std::memcpy(data.data(), payload.data() + offset, n * sizeof(double));
    offset += n * sizeof(double);
    try {
      loaded.emplace_back(shape, std::move(data));
    } catch (const std::domain_error&) {
      throw CheckpointError("checkpoint tensor '" + name + "' holds non-finite values");
    }
  }
  if (offset != payload.size()) throw CheckpointError("checkpoint payload has trailing bytes");

  std::size_t idx = 0;
  for (const auto& [name, p] : reference) {
    (void)p;
    if (net.params().contains(name)) {
      net.params().value(name) = loaded[idx];
    } else if (name.ends_with(".running_mean")) {
      net.running_stats()[std::stoul(name.substr(2))].mean = loaded[idx];
    } else if (name.ends_with(".running_var")) {
      net.running_stats()[std::stoul(name.substr(2))].var = loaded[idx];
    }
    ++idx;
  }
  net.set_source_stats(FeatureStats{loaded[idx - 2], loaded[idx - 1]});
  return net;
}

Network load_checkpoint(std::string_view bytes, const NetworkSpec& expected) {
  Network net = load_checkpoint(bytes);
  if (!(net.spec() == expected)) throw CheckpointError("checkpoint was written for a different network spec");
  return net;
}

void write_checkpoint_file(const Network& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  const std::string bytes = save_checkpoint(net);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint to '" + path + "'");
}

Network read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_checkpoint(buf.str());
}

std::uint32_t network_fingerprint(const Network& net) { return crc_of(save_checkpoint(net)); }

}  // namespace sotta
