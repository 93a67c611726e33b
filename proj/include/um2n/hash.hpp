#pragma once

#include <cstdint>
#include <string_view>

namespace um2n {

/// FNV-1a, 64-bit. Configuration hashes are FNV-1a over the canonical
/// key=value description of the config, so they are stable across runs
/// and platforms.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace um2n
