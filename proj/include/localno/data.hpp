#pragma once

// Synthetic tasks with closed-form targets.
//
// Darcy: u is a random combination of Dirichlet Laplace eigenfunctions on
// (0,1)^2 and the target is f = -div(a grad u) with
//   a(x) = [[x1^2, sin(x1 x2)], [x1 + x2, x2]]   (not symmetric),
// expanded by the product rule:
//   f = -[(2 x1 + 1) u_1 + (x2 cos(x1 x2) + 1) u_2 + x1^2 u_11
//         + (sin(x1 x2) + x1 + x2) u_12 + x2 u_22].
//
// Parabola: v(x) = |x|^2 (c_1, ..., c_n), whose image under a first-order
// operator with directions b_j is sum_j c_j 2 x.b_j.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "localno/binary_io.hpp"
#include "localno/differential.hpp"
#include "localno/error.hpp"
#include "localno/field.hpp"
#include "localno/geometry.hpp"
#include "localno/rng.hpp"

namespace localno {

inline constexpr int kDatasetVersion = 1;
inline constexpr int kDarcyGeneratorVersion = 1;
inline constexpr std::string_view kDatasetMagic = "LNODATA";
inline constexpr std::size_t kDarcyModes = 20;
/// Test-split samples use seeds offset by this much from the training split.
inline constexpr std::uint64_t kTestSeedOffset = 1'000'000;

// ---------------------------------------------------------------------------
// Darcy

struct DarcySample {
  Field u;  ///< (1, 1, points)
  Field f;  ///< (1, 1, points)
  std::uint64_t seed = 0;
};

/// c_ij ~ N(0, 1/(i+j)) for i, j = 1..20, stored row-major in i, drawn in
/// that order from Rng(seed).
inline std::vector<double> darcy_coefficients(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> c(kDarcyModes * kDarcyModes);
  for (std::size_t i = 1; i <= kDarcyModes; ++i)
    for (std::size_t j = 1; j <= kDarcyModes; ++j)
      c[(i - 1) * kDarcyModes + (j - 1)] = rng.normal() / std::sqrt(static_cast<double>(i + j));
  return c;
}

inline void require_unit_square(const Grid& g) {
  require(g.topology() == Topology::BoundedBox && g.is_regular() && g.dim() == 2, ErrorKind::InvalidArgument,
          "the Darcy task needs a bounded regular grid on (0,1)^2");
  require(g.extent()[0] == 1.0 && g.extent()[1] == 1.0, ErrorKind::InvalidArgument,
          "the Darcy task needs the unit square");
}

namespace detail {

// The optimiser may or may not fuse a sin/cos pair of the same argument into
// one sincos call, and the two paths can differ in the last bit. Calling
// sincos explicitly keeps generated data identical across binaries.
inline void sin_cos(double x, double& s, double& c) { ::sincos(x, &s, &c); }

}  // namespace detail

/// Analytic u and f for given coefficients (layout of darcy_coefficients).
/// Evaluated separably: per row x1 the inner sums over i are formed once,
/// then every point costs O(modes); the arithmetic at a point depends only
/// on its coordinates, so nested grids agree bitwise at shared points.
inline DarcySample darcy_from_coefficients(const Grid& g, const std::vector<double>& c) {
  require_unit_square(g);
  require(c.size() == kDarcyModes * kDarcyModes, ErrorKind::InvalidArgument, "expected 400 Darcy coefficients");
  constexpr std::size_t M = kDarcyModes;
  const double pi = std::numbers::pi;
  const std::size_t n0 = g.shape()[0], n1 = g.shape()[1];
  // amplitude A_ij = c_ij / (pi sqrt(i^2 + j^2))
  std::vector<double> A(M * M);
  for (std::size_t i = 1; i <= M; ++i)
    for (std::size_t j = 1; j <= M; ++j)
      A[(i - 1) * M + j - 1] = c[(i - 1) * M + j - 1] / (pi * std::sqrt(static_cast<double>(i * i + j * j)));
  auto tables = [&](std::size_t n, std::size_t axis) {
    std::vector<double> s(n * M), co(n * M);
    for (std::size_t p = 0; p < n; ++p) {
      const double x = g.coord(axis == 0 ? p * n1 : p, axis);
      for (std::size_t k = 1; k <= M; ++k) {
        detail::sin_cos(static_cast<double>(k) * pi * x, s[p * M + k - 1], co[p * M + k - 1]);
      }
    }
    return std::pair{s, co};
  };
  const auto [s0, c0] = tables(n0, 0);
  const auto [s1, c1] = tables(n1, 1);
  DarcySample out{Field(1, 1, g.size()), Field(1, 1, g.size()), 0};
  std::vector<double> Bs(M), Bc(M), Bss(M);  // per j: sum_i A_ij {s_i, i pi c_i, -(i pi)^2 s_i}
  for (std::size_t r = 0; r < n0; ++r) {
    for (std::size_t j = 0; j < M; ++j) {
      double a = 0.0, b = 0.0, d = 0.0;
      for (std::size_t i = 0; i < M; ++i) {
        const double ip = static_cast<double>(i + 1) * pi;
        const double Aij = A[i * M + j];
        a += Aij * s0[r * M + i];
        b += Aij * ip * c0[r * M + i];
        d -= Aij * ip * ip * s0[r * M + i];
      }
      Bs[j] = a;
      Bc[j] = b;
      Bss[j] = d;
    }
    const double x1 = g.coord(r * n1, 0);
    for (std::size_t q = 0; q < n1; ++q) {
      const double x2 = g.coord(r * n1 + q, 1);
      double u = 0, u1 = 0, u2 = 0, u11 = 0, u12 = 0, u22 = 0;
      for (std::size_t j = 0; j < M; ++j) {
        const double jp = static_cast<double>(j + 1) * pi;
        const double sj = s1[q * M + j], cj = c1[q * M + j];
        u += Bs[j] * sj;
        u1 += Bc[j] * sj;
        u2 += Bs[j] * jp * cj;
        u11 += Bss[j] * sj;
        u12 += Bc[j] * jp * cj;
        u22 -= Bs[j] * jp * jp * sj;
      }
      double sx, cx;
      detail::sin_cos(x1 * x2, sx, cx);
      const std::size_t p = r * n1 + q;
      out.u(0, 0, p) = u;
      out.f(0, 0, p) = -((2 * x1 + 1) * u1 + (x2 * cx + 1) * u2 + x1 * x1 * u11 + (sx + x1 + x2) * u12 + x2 * u22);
    }
  }
  return out;
}

inline DarcySample gen_darcy(const Grid& g, std::uint64_t seed) {
  auto s = darcy_from_coefficients(g, darcy_coefficients(seed));
  s.seed = seed;
  return s;
}

// ---------------------------------------------------------------------------
// Parabola

struct ParabolaSpec {
  std::vector<double> coefficients;  ///< base c_1..c_n, before scaling
  double scale = 1.0;

  std::size_t channels() const { return coefficients.size(); }
  double coefficient(std::size_t j) const { return scale * coefficients[j]; }

  /// n coefficients uniform on [0, 1) from Rng(seed).
  static ParabolaSpec uniform(std::size_t n, double scale, std::uint64_t seed) {
    require(n >= 1, ErrorKind::InvalidArgument, "parabola needs at least one channel");
    ParabolaSpec s;
    Rng rng(seed);
    for (std::size_t j = 0; j < n; ++j) s.coefficients.push_back(rng.uniform());
    s.scale = scale;
    return s;
  }
};

struct ParabolaTask {
  Field input;  ///< (1, n, points)
  /// Exact image of the input under the first-order operator with the given
  /// signature: channel co gets sum_j c_j (2 x.b_{co,j} + c0_{co,j} |x|^2).
  std::function<Field(const DirectionalSignature&)> target;
};

inline ParabolaTask gen_parabola(const Grid& g, const ParabolaSpec& spec) {
  require(spec.channels() >= 1, ErrorKind::InvalidArgument, "parabola needs at least one channel");
  require(g.is_planar(), ErrorKind::UnsupportedTopology, "parabola needs a planar grid");
  const std::size_t n = spec.channels(), N = g.size(), d = g.dim();
  auto sq = [&g, d](std::size_t p) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += g.coord(p, k) * g.coord(p, k);
    return s;
  };
  ParabolaTask t{Field(1, n, N), {}};
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < N; ++p) t.input(0, j, p) = sq(p) * spec.coefficient(j);
  auto grid = std::make_shared<const Grid>(g);
  t.target = [grid, spec](const DirectionalSignature& sig) {
    auto sq = [&](std::size_t p) {
      double s = 0.0;
      for (std::size_t k = 0; k < grid->dim(); ++k) s += grid->coord(p, k) * grid->coord(p, k);
      return s;
    };
    require(sig.in_channels == spec.channels() && sig.dim == grid->dim(), ErrorKind::InvalidArgument,
            "signature does not match the parabola channels or grid dimension");
    Field out(1, sig.out_channels, grid->size());
    for (std::size_t co = 0; co < sig.out_channels; ++co)
      for (std::size_t p = 0; p < grid->size(); ++p) {
        double v = 0.0;
        for (std::size_t j = 0; j < sig.in_channels; ++j) {
          double xb = 0.0;
          for (std::size_t k = 0; k < sig.dim; ++k) xb += grid->coord(p, k) * sig.dir(co, j, k);
          v += spec.coefficient(j) * (2.0 * xb + sig.coef(co, j) * sq(p));
        }
        out(0, co, p) = v;
      }
    return out;
  };
  return t;
}

// ---------------------------------------------------------------------------
// Dataset files: container with JSON header {version, task, generator_version,
// seed, split, count, grid, input_channels, target_channels, [parabola]}
// and payload float64 ordered (sample, [inputs..., targets...], points).

struct Dataset {
  std::string task;
  std::uint64_t seed = 0;  ///< seed of sample 0; sample k uses seed + k
  std::string split = "train";
  Grid grid;
  std::vector<std::string> input_channels, target_channels;
  Field input, target;
  nlohmann::json extra = nlohmann::json::object();

  std::size_t size() const { return input.batch(); }
};

inline Grid grid_from_header(const nlohmann::json& h) {
  const auto topo = topology_from_string(h.at("topology").get<std::string>());
  const auto shape = h.at("shape").get<std::vector<std::size_t>>();
  if (topo == Topology::Sphere) return make_equiangular_sphere_grid(shape.at(0), shape.at(1));
  require(topo != Topology::Unstructured && !shape.empty(), ErrorKind::IncompatibleDataset,
          "dataset grids must be regular");
  return make_regular_grid(shape, h.at("extent").get<std::vector<double>>(), topo == Topology::PeriodicBox);
}

/// `count` Darcy samples with seeds first_seed, first_seed + 1, ...
inline Dataset gen_darcy_dataset(const Grid& g, std::size_t count, std::uint64_t first_seed,
                                 const std::string& split = "train") {
  require(count >= 1, ErrorKind::InvalidArgument, "sample count must be >= 1");
  Dataset ds{"darcy", first_seed, split, g, {"u"}, {"f"}, Field(count, 1, g.size()), Field(count, 1, g.size()),
                nlohmann::json::object()};
  for (std::size_t k = 0; k < count; ++k) {
    const auto s = gen_darcy(g, first_seed + k);
    std::copy(s.u.values().begin(), s.u.values().end(), ds.input.sample(k).begin());
    std::copy(s.f.values().begin(), s.f.values().end(), ds.target.sample(k).begin());
  }
  return ds;
}

/// Training split uses seeds seed + k, test split seed + 1e6 + k.
inline std::uint64_t split_seed(std::uint64_t seed, const std::string& split) {
  require(split == "train" || split == "test", ErrorKind::InvalidArgument, "split must be 'train' or 'test'");
  return split == "train" ? seed : seed + kTestSeedOffset;
}

inline void write_dataset(const Dataset& ds, const std::string& path) {
  require(ds.input.batch() == ds.target.batch(), ErrorKind::InvalidArgument, "input/target sample counts differ");
  require(ds.input.channels() == ds.input_channels.size() && ds.target.channels() == ds.target_channels.size(),
          ErrorKind::InvalidArgument, "channel names do not match the fields");
  nlohmann::json h = {{"version", kDatasetVersion},
                      {"task", ds.task},
                      {"generator_version", kDarcyGeneratorVersion},
                      {"seed", ds.seed},
                      {"split", ds.split},
                      {"count", ds.size()},
                      {"grid", grid_header(ds.grid)},
                      {"input_channels", ds.input_channels},
                      {"target_channels", ds.target_channels},
                      {"extra", ds.extra}};
  io::write_container(path, kDatasetMagic, h, [&](std::ostream& os) {
    for (std::size_t k = 0; k < ds.size(); ++k) {
      io::write_array<double>(os, ds.input.sample(k));
      io::write_array<double>(os, ds.target.sample(k));
    }
  });
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream is;
  const auto h = io::open_container(is, path, kDatasetMagic);
  try {
    require(h.at("version").get<int>() == kDatasetVersion, ErrorKind::IncompatibleDataset,
            path + ": dataset version " + h.at("version").dump() + " (expected " + std::to_string(kDatasetVersion) + ")");
    require(h.at("generator_version").get<int>() == kDarcyGeneratorVersion, ErrorKind::IncompatibleDataset,
            path + ": generator version mismatch");
    Dataset ds;
    ds.task = h.at("task").get<std::string>();
    ds.seed = h.at("seed").get<std::uint64_t>();
    ds.split = h.value("split", "train");
    ds.grid = grid_from_header(h.at("grid"));
    ds.input_channels = h.at("input_channels").get<std::vector<std::string>>();
    ds.target_channels = h.at("target_channels").get<std::vector<std::string>>();
    ds.extra = h.value("extra", nlohmann::json::object());
    const std::size_t count = h.at("count").get<std::size_t>();
    const std::size_t N = ds.grid.size();
    const std::uint64_t need =
        static_cast<std::uint64_t>(count) * (ds.input_channels.size() + ds.target_channels.size()) * N * 8;
    require(io::remaining_bytes(is) == need, ErrorKind::IncompatibleDataset,
            path + ": payload size does not match the header (truncated or padded file)");
    ds.input = Field(count, ds.input_channels.size(), N);
    ds.target = Field(count, ds.target_channels.size(), N);
    for (std::size_t k = 0; k < count; ++k) {
      io::read_array<double>(is, ds.input.sample(k), path);
      io::read_array<double>(is, ds.target.sample(k), path);
    }
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::IncompatibleDataset, path + ": malformed header (" + e.what() + ")");
  }
}

}  // namespace localno
