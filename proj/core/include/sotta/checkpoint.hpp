#pragma once

#include <string>
#include <string_view>

#include "sotta/network.hpp"

namespace sotta {

// Layout:
//   SOTTA1\n
//   text header, one "key value..." entry per line:
//     input_dim, hidden, classes, delta, tensors <count>,
//     one "tensor <name> <rank> <dims...>" line per tensor,
//     crc32 <hex of payload>, payload_bytes <n>, end
//   little-endian float64 payload, tensors in header order.
inline constexpr std::string_view kCheckpointMagic = "SOTTA1\n";

std::string save_checkpoint(const Network& net);
/// Throws CheckpointError on a bad magic, truncation or CRC mismatch.
Network load_checkpoint(std::string_view bytes);
/// As above, and additionally rejects a checkpoint of a different spec.
Network load_checkpoint(std::string_view bytes, const NetworkSpec& expected);

void write_checkpoint_file(const Network& net, const std::string& path);
Network read_checkpoint_file(const std::string& path);

/// CRC32 of the serialized network, a compact identity for a model state.
std::uint32_t network_fingerprint(const Network& net);

}  // namespace sotta
