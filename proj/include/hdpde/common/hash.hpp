#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace hdpde {

/// 64-bit FNV-1a; stable across platforms, used for cache keys and config hashes.
inline std::uint64_t fnv1a(std::string_view bytes,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a(const Eigen::MatrixXd& m,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = reinterpret_cast<const char*>(m.data());
  return fnv1a(std::string_view(p, static_cast<std::size_t>(m.size()) * sizeof(double)), h);
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace hdpde
