#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "localno/field.hpp"
#include "localno/rng.hpp"

namespace testutil {

inline localno::Field random_field(std::size_t batch, std::size_t channels, std::size_t points, std::uint64_t seed) {
  localno::Rng rng(seed);
  localno::Field f(batch, channels, points);
  for (auto& v : f.values()) v = rng.normal();
  return f;
}

inline void fill_normal(std::vector<double>& v, std::uint64_t seed, double sd = 1.0) {
  localno::Rng rng(seed);
  for (auto& x : v) x = rng.normal(0.0, sd);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Directional finite-difference check of a VJP: for a scalar functional
/// J(x) = <u, f(x)>, compares central differences along random directions
/// with <grad, dir>. Returns the worst relative error.
inline double directional_check(const std::function<double(std::span<const double>)>& objective,
                                std::vector<double> x, std::span<const double> grad, std::uint64_t seed,
                                int directions = 6, double step = 1e-5) {
  localno::Rng rng(seed);
  double worst = 0.0;
  std::vector<double> dir(x.size()), xp(x.size()), xm(x.size());
  for (int r = 0; r < directions; ++r) {
    for (auto& d : dir) d = rng.normal();
    for (std::size_t i = 0; i < x.size(); ++i) {
      xp[i] = x[i] + step * dir[i];
      xm[i] = x[i] - step * dir[i];
    }
    const double fd = (objective(xp) - objective(xm)) / (2.0 * step);
    const double an = dot(grad, dir);
    worst = std::max(worst, std::abs(fd - an) / std::max(1e-8, std::max(std::abs(fd), std::abs(an))));
  }
  return worst;
}

inline std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "localno_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace testutil
