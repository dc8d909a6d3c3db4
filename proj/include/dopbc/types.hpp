#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include <Eigen/Dense>

namespace dopbc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Full-precision text form used by every CSV writer; 17 significant digits
// round-trip an IEEE double exactly.
inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// SplitMix64 finalizer; derives independent stream seeds from (seed, salt).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace dopbc
