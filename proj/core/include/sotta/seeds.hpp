#pragma once

#include <cstdint>
#include <string_view>

namespace sotta {

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// 64-bit FNV-1a hash of a tag.
std::uint64_t hash_tag(std::string_view tag);

/// Per-component child seeds derived from one master seed.
///
/// child(tag) = mix64(mix64(master) ^ hash_tag(tag)). Derivation is pure, so
/// independent runs never share or interleave a random stream.
struct RngTree {
  std::uint64_t master = 0;

  std::uint64_t derive(std::string_view tag) const;
  RngTree child(std::string_view tag) const { return RngTree{derive(tag)}; }
};

inline std::uint64_t derive_seed(const RngTree& tree, std::string_view tag) { return tree.derive(tag); }

}  // namespace sotta
