#pragma once

// Discrete-continuous convolutions: the group action is applied to the
// filter analytically, the integral is a quadrature sum. For a basis
// kappa^(l) this yields one sparse matrix K^(l)_ij = kappa^(l)(g_i^-1 x_j)
// per basis function, all sharing one sparsity pattern.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "localno/basis.hpp"
#include "localno/binary_io.hpp"
#include "localno/error.hpp"
#include "localno/field.hpp"
#include "localno/geometry.hpp"
#include "localno/neighbors.hpp"
#include "localno/parallel.hpp"

namespace localno {

enum class KernelGeometry { Planar, Torus, Sphere };

enum class NeighborSearch { Auto, BruteForce, Accelerated };

struct AssemblyOptions {
  /// Multiply q_j into the stored entries instead of applying it at forward time.
  bool fold_quadrature = false;
  /// Divide each basis function's row by its quadrature mass sum_j K_ij q_j.
  bool normalize = false;
  NeighborSearch search = NeighborSearch::Auto;
};

/// Brute-force search is used below this many input points.
inline constexpr std::size_t kBruteForceLimit = 4096;

/// Row-compressed K^(l), one shared index structure, values stored
/// basis-major: values[l * nnz + e].
struct AssembledKernel {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t basis = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<std::size_t> col_idx;
  std::vector<double> values;
  /// Input quadrature weights applied at forward time (all ones when folded).
  std::vector<double> col_weights;
  bool quadrature_folded = false;
  KernelGeometry geometry = KernelGeometry::Planar;
  std::shared_ptr<const Grid> grid_in;
  std::shared_ptr<const Grid> grid_out;

  std::size_t nnz() const noexcept { return col_idx.size(); }
  double value(std::size_t l, std::size_t e) const { return values[l * nnz() + e]; }

  /// Dense copy of K^(l), for tests and small diagnostics.
  Eigen::MatrixXd dense(std::size_t l) const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t e = row_ptr[i]; e < row_ptr[i + 1]; ++e)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col_idx[e])) = value(l, e);
    return m;
  }
};

/// Filter coefficients theta, shape (out_channels, in_channels, L).
struct DiscoParams {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t basis = 0;
  std::vector<double> theta;

  DiscoParams() = default;
  DiscoParams(std::size_t co, std::size_t ci, std::size_t l)
      : out_channels(co), in_channels(ci), basis(l), theta(co * ci * l, 0.0) {}

  double& operator()(std::size_t co, std::size_t ci, std::size_t l) { return theta[(co * in_channels + ci) * basis + l]; }
  double operator()(std::size_t co, std::size_t ci, std::size_t l) const {
    return theta[(co * in_channels + ci) * basis + l];
  }
};

namespace detail {

inline double wrap_into(double x, double lo, double period) {
  double r = std::fmod(x - lo, period);
  if (r < 0.0) r += period;
  if (r >= period) r = 0.0;
  return lo + r;
}

/// Offsets x_j - y_i in the grid metric; periodic axes wrap into
/// [window_lo, window_lo + extent).
struct PlanarMetric {
  std::size_t dim = 0;
  bool periodic = false;
  std::vector<double> extent;
  std::vector<double> window_lo;

  void offset(std::span<const double> x, std::span<const double> y, double* out) const {
    for (std::size_t k = 0; k < dim; ++k) {
      const double d = x[k] - y[k];
      out[k] = periodic ? wrap_into(d, window_lo[k], extent[k]) : d;
    }
  }
};

inline double norm(const double* v, std::size_t dim) {
  double s = 0.0;
  for (std::size_t k = 0; k < dim; ++k) s += v[k] * v[k];
  return std::sqrt(s);
}

/// Shared CSR construction. `row_entries(i, cols, vals)` appends the
/// columns of row i (ascending) and their L basis values.
template <class RowFn>
AssembledKernel build_csr(std::size_t rows, std::size_t cols, std::size_t basis, RowFn&& row_entries) {
  std::vector<std::vector<std::size_t>> row_cols(rows);
  std::vector<std::vector<double>> row_vals(rows);
  parallel_for(rows, [&](std::size_t i) { row_entries(i, row_cols[i], row_vals[i]); });
  AssembledKernel k;
  k.rows = rows;
  k.cols = cols;
  k.basis = basis;
  k.row_ptr.assign(rows + 1, 0);
  for (std::size_t i = 0; i < rows; ++i) {
    if (row_cols[i].empty())
      throw Error(ErrorKind::AssemblyDegenerate,
                  "output row " + std::to_string(i) + " has no input point inside the filter support");
    k.row_ptr[i + 1] = k.row_ptr[i] + row_cols[i].size();
  }
  const std::size_t nnz = k.row_ptr.back();
  k.col_idx.resize(nnz);
  k.values.resize(nnz * basis);
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t base = k.row_ptr[i];
    for (std::size_t e = 0; e < row_cols[i].size(); ++e) {
      k.col_idx[base + e] = row_cols[i][e];
      for (std::size_t l = 0; l < basis; ++l) k.values[l * nnz + base + e] = row_vals[i][e * basis + l];
    }
  }
  return k;
}

inline void finish_kernel(AssembledKernel& k, const Grid& in, const Grid& out, const AssemblyOptions& opt) {
  k.grid_in = std::make_shared<const Grid>(in);
  k.grid_out = std::make_shared<const Grid>(out);
  const std::size_t nnz = k.nnz();
  if (opt.normalize) {
    for (std::size_t l = 0; l < k.basis; ++l)
      for (std::size_t i = 0; i < k.rows; ++i) {
        double mass = 0.0;
        for (std::size_t e = k.row_ptr[i]; e < k.row_ptr[i + 1]; ++e)
          mass += k.values[l * nnz + e] * in.weight(k.col_idx[e]);
        if (mass > 0.0)
          for (std::size_t e = k.row_ptr[i]; e < k.row_ptr[i + 1]; ++e) k.values[l * nnz + e] /= mass;
      }
  }
  k.quadrature_folded = opt.fold_quadrature;
  if (opt.fold_quadrature) {
    for (std::size_t l = 0; l < k.basis; ++l)
      for (std::size_t e = 0; e < nnz; ++e) k.values[l * nnz + e] *= in.weight(k.col_idx[e]);
    k.col_weights.assign(in.size(), 1.0);
  } else {
    k.col_weights.assign(in.weights().begin(), in.weights().end());
  }
}

}  // namespace detail

/// Assembles K^(l)_ij = kappa^(l)(x_j - y_i) on planar grids (bounded box,
/// torus, or a Euclidean point cloud). Entries with a zero filter value at
/// every l are dropped; the support is the open ball of radius r_cutoff.
inline AssembledKernel assemble_planar(const Grid& grid_in, const Grid& grid_out, const KernelBasis& basis,
                                       const AssemblyOptions& opt = {}) {
  require(grid_in.is_planar() && grid_out.is_planar(), ErrorKind::UnsupportedTopology,
          "assemble_planar needs planar grids");
  require(grid_in.dim() == grid_out.dim(), ErrorKind::InvalidArgument, "grid dimensions differ");
  const std::size_t dim = grid_in.dim();
  require(dim <= 2, ErrorKind::InvalidArgument, "planar DISCO assembly supports 1D and 2D grids");
  const bool periodic = grid_in.topology() == Topology::PeriodicBox;
  require(periodic == (grid_out.topology() == Topology::PeriodicBox), ErrorKind::InvalidArgument,
          "input and output grids must both be periodic or both non-periodic");

  const auto* hat = std::get_if<HatBasis1D>(&basis);
  const auto* radial = std::get_if<RadialAnisotropicBasis>(&basis);
  require(!hat || dim == 1, ErrorKind::InvalidArgument, "1D hat bases need a 1D grid");

  detail::PlanarMetric metric;
  metric.dim = dim;
  metric.periodic = periodic;
  if (periodic) {
    require(grid_in.extent() == grid_out.extent(), ErrorKind::InvalidArgument, "periodic grids must share extent");
    metric.extent = grid_in.extent();
    const double min_extent = *std::min_element(metric.extent.begin(), metric.extent.end());
    if (hat) {
      require(hat->cutoff() - hat->lower() <= min_extent, ErrorKind::InvalidArgument,
              "hat basis support is longer than the periodic extent");
      metric.window_lo.assign(dim, hat->lower());
    } else {
      require(radial->cutoff() < 0.5 * min_extent, ErrorKind::InvalidArgument,
              "r_cutoff must be below half the smallest periodic extent");
      metric.window_lo.resize(dim);
      for (std::size_t k = 0; k < dim; ++k) metric.window_lo[k] = -0.5 * metric.extent[k];
    }
  }

  const std::size_t L = basis_size(basis);
  const double radius = support_radius(basis);
  const bool brute = opt.search == NeighborSearch::BruteForce ||
                     (opt.search == NeighborSearch::Auto && grid_in.size() < kBruteForceLimit);
  std::optional<CellIndex> index;
  if (!brute) index.emplace(grid_in, radius, periodic, metric.extent);

  auto row = [&](std::size_t i, std::vector<std::size_t>& cols, std::vector<double>& vals) {
    const auto y = grid_out.point(i);
    std::vector<std::size_t> candidates;
    if (index) index->query(y, candidates);
    const std::size_t n_cand = index ? candidates.size() : grid_in.size();
    std::vector<double> v(L);
    double off[3];
    for (std::size_t c = 0; c < n_cand; ++c) {
      const std::size_t j = index ? candidates[c] : c;
      metric.offset(grid_in.point(j), y, off);
      if (hat) {
        hat->eval(off[0], v);
      } else {
        const double r = detail::norm(off, dim);
        if (!(r < radial->cutoff())) continue;
        const double phi = dim == 1 ? (off[0] >= 0.0 ? 0.0 : std::numbers::pi) : std::atan2(off[1], off[0]);
        radial->eval(r, phi, v);
      }
      if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) continue;
      cols.push_back(j);
      vals.insert(vals.end(), v.begin(), v.end());
    }
  };
  auto k = detail::build_csr(grid_out.size(), grid_in.size(), L, row);
  k.geometry = periodic ? KernelGeometry::Torus : KernelGeometry::Planar;
  detail::finish_kernel(k, grid_in, grid_out, opt);
  return k;
}

/// Assembles K^(l)_ij = kappa^(l)(geodesic_offset(g_i, x_j)) on the sphere,
/// with g_i the rotation taking the north pole to output point i.
inline AssembledKernel assemble_spherical(const Grid& grid_in, const Grid& grid_out, const RadialAnisotropicBasis& basis,
                                          const AssemblyOptions& opt = {}) {
  require(grid_in.topology() == Topology::Sphere && grid_out.topology() == Topology::Sphere,
          ErrorKind::UnsupportedTopology, "assemble_spherical needs spherical grids");
  require(basis.cutoff() < std::numbers::pi, ErrorKind::InvalidArgument, "r_cutoff must be below pi");
  const std::size_t L = basis.size();
  const bool brute = opt.search == NeighborSearch::BruteForce ||
                     (opt.search == NeighborSearch::Auto && grid_in.size() < kBruteForceLimit);
  // latitude-band pruning: geodesic distance >= |colatitude difference|
  std::vector<std::size_t> by_lat(grid_in.size());
  for (std::size_t j = 0; j < by_lat.size(); ++j) by_lat[j] = j;
  std::stable_sort(by_lat.begin(), by_lat.end(),
                   [&](std::size_t a, std::size_t b) { return grid_in.coord(a, 0) < grid_in.coord(b, 0); });

  auto row = [&](std::size_t i, std::vector<std::size_t>& cols, std::vector<double>& vals) {
    const SphereRotation center{grid_out.coord(i, 0), grid_out.coord(i, 1)};
    std::vector<std::size_t> candidates;
    if (!brute) {
      const double lo = center.colatitude - basis.cutoff();
      const double hi = center.colatitude + basis.cutoff();
      auto first = std::lower_bound(by_lat.begin(), by_lat.end(), lo,
                                    [&](std::size_t j, double v) { return grid_in.coord(j, 0) < v; });
      auto last = std::upper_bound(by_lat.begin(), by_lat.end(), hi,
                                   [&](double v, std::size_t j) { return v < grid_in.coord(j, 0); });
      candidates.assign(first, last);
      std::sort(candidates.begin(), candidates.end());
    }
    const std::size_t n_cand = brute ? grid_in.size() : candidates.size();
    std::vector<double> v(L);
    for (std::size_t c = 0; c < n_cand; ++c) {
      const std::size_t j = brute ? c : candidates[c];
      const auto off = geodesic_offset(center, grid_in.coord(j, 0), grid_in.coord(j, 1));
      if (!(off.radial < basis.cutoff())) continue;
      basis.eval(off.radial, off.azimuthal, v);
      cols.push_back(j);
      vals.insert(vals.end(), v.begin(), v.end());
    }
  };
  auto k = detail::build_csr(grid_out.size(), grid_in.size(), L, row);
  k.geometry = KernelGeometry::Sphere;
  detail::finish_kernel(k, grid_in, grid_out, opt);
  return k;
}

/// Dispatches on the grid topology.
inline AssembledKernel assemble(const Grid& grid_in, const Grid& grid_out, const KernelBasis& basis,
                                const AssemblyOptions& opt = {}) {
  if (grid_in.topology() == Topology::Sphere) {
    const auto* radial = std::get_if<RadialAnisotropicBasis>(&basis);
    require(radial != nullptr, ErrorKind::InvalidArgument, "spherical DISCO needs a radial basis");
    return assemble_spherical(grid_in, grid_out, *radial, opt);
  }
  return assemble_planar(grid_in, grid_out, basis, opt);
}

// ---------------------------------------------------------------------------
// Application

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// theta rearranged to (Co, L*Ci) with column index l*Ci + ci.
inline RowMatrix theta_matrix(const DiscoParams& p) {
  RowMatrix t(static_cast<Eigen::Index>(p.out_channels), static_cast<Eigen::Index>(p.basis * p.in_channels));
  for (std::size_t co = 0; co < p.out_channels; ++co)
    for (std::size_t ci = 0; ci < p.in_channels; ++ci)
      for (std::size_t l = 0; l < p.basis; ++l)
        t(static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(l * p.in_channels + ci)) = p(co, ci, l);
  return t;
}

/// Z[i, l*Ci + ci] = sum_j K^(l)_ij q_j x[ci, j] for one batch element.
inline RowMatrix basis_responses(const AssembledKernel& k, std::span<const double> x, std::size_t ci_count) {
  const auto Ci = static_cast<Eigen::Index>(ci_count);
  Eigen::Map<const RowMatrix> X(x.data(), Ci, static_cast<Eigen::Index>(k.cols));
  const RowMatrix Xt = X.transpose();
  RowMatrix Z = RowMatrix::Zero(static_cast<Eigen::Index>(k.rows), static_cast<Eigen::Index>(k.basis) * Ci);
  const std::size_t nnz = k.nnz();
  for (std::size_t i = 0; i < k.rows; ++i) {
    auto zrow = Z.row(static_cast<Eigen::Index>(i));
    for (std::size_t e = k.row_ptr[i]; e < k.row_ptr[i + 1]; ++e) {
      const std::size_t j = k.col_idx[e];
      const double q = k.col_weights[j];
      const auto xrow = Xt.row(static_cast<Eigen::Index>(j));
      for (std::size_t l = 0; l < k.basis; ++l) {
        const double c = k.values[l * nnz + e] * q;
        if (c != 0.0) zrow.segment(static_cast<Eigen::Index>(l) * Ci, Ci).noalias() += c * xrow;
      }
    }
  }
  return Z;
}

inline void check_disco_shapes(const AssembledKernel& k, const DiscoParams& p, const Field& input) {
  require(p.basis == k.basis, ErrorKind::InvalidArgument, "theta basis count does not match the kernel");
  require(p.theta.size() == p.out_channels * p.in_channels * p.basis, ErrorKind::InvalidArgument,
          "theta has the wrong size");
  require_shape(input, p.in_channels, k.cols, "disco input");
}

}  // namespace detail

/// out[co, i] = sum_ci sum_l theta[co,ci,l] sum_j K^(l)_ij q_j in[ci, j].
inline Field disco_forward(const AssembledKernel& k, const DiscoParams& p, const Field& input) {
  detail::check_disco_shapes(k, p, input);
  const auto T = detail::theta_matrix(p);
  Field out(input.batch(), p.out_channels, k.rows);
  for (std::size_t b = 0; b < input.batch(); ++b) {
    const auto Z = detail::basis_responses(k, input.sample(b), p.in_channels);
    Eigen::Map<detail::RowMatrix> O(out.sample(b).data(), static_cast<Eigen::Index>(p.out_channels),
                                    static_cast<Eigen::Index>(k.rows));
    O.noalias() = T * Z.transpose();
  }
  return out;
}

struct DiscoGrads {
  DiscoParams params;
  Field input;
};

/// Adjoint of disco_forward with respect to theta and the input.
inline DiscoGrads disco_vjp(const AssembledKernel& k, const DiscoParams& p, const Field& input, const Field& upstream) {
  detail::check_disco_shapes(k, p, input);
  require(upstream.batch() == input.batch(), ErrorKind::InvalidArgument, "upstream batch mismatch");
  require_shape(upstream, p.out_channels, k.rows, "disco upstream");
  const auto T = detail::theta_matrix(p);
  const auto Ci = static_cast<Eigen::Index>(p.in_channels);
  detail::RowMatrix gT = detail::RowMatrix::Zero(T.rows(), T.cols());
  DiscoGrads g{DiscoParams(p.out_channels, p.in_channels, p.basis), Field(input.batch(), p.in_channels, k.cols)};
  const std::size_t nnz = k.nnz();
  for (std::size_t b = 0; b < input.batch(); ++b) {
    const auto Z = detail::basis_responses(k, input.sample(b), p.in_channels);
    Eigen::Map<const detail::RowMatrix> G(upstream.sample(b).data(), static_cast<Eigen::Index>(p.out_channels),
                                          static_cast<Eigen::Index>(k.rows));
    gT.noalias() += G * Z;
    const detail::RowMatrix gZ = G.transpose() * T;  // (rows, L*Ci)
    detail::RowMatrix gXt = detail::RowMatrix::Zero(static_cast<Eigen::Index>(k.cols), Ci);
    for (std::size_t i = 0; i < k.rows; ++i) {
      const auto zrow = gZ.row(static_cast<Eigen::Index>(i));
      for (std::size_t e = k.row_ptr[i]; e < k.row_ptr[i + 1]; ++e) {
        const std::size_t j = k.col_idx[e];
        const double q = k.col_weights[j];
        auto xrow = gXt.row(static_cast<Eigen::Index>(j));
        for (std::size_t l = 0; l < k.basis; ++l) {
          const double c = k.values[l * nnz + e] * q;
          if (c != 0.0) xrow.noalias() += c * zrow.segment(static_cast<Eigen::Index>(l) * Ci, Ci);
        }
      }
    }
    Eigen::Map<detail::RowMatrix> GX(g.input.sample(b).data(), Ci, static_cast<Eigen::Index>(k.cols));
    GX = gXt.transpose();
  }
  for (std::size_t co = 0; co < p.out_channels; ++co)
    for (std::size_t ci = 0; ci < p.in_channels; ++ci)
      for (std::size_t l = 0; l < p.basis; ++l)
        g.params(co, ci, l) = gT(static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(l * p.in_channels + ci));
  return g;
}

// ---------------------------------------------------------------------------
// Equidistant-grid equivalence with a standard convolution

/// Translation-invariant taps: output[co, i] = sum_ci sum_t
/// values[(co*Ci + ci)*taps + t] * input[ci, i + offsets[t]] (periodic).
struct DenseStencil {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::vector<std::vector<long>> offsets;  ///< per tap, per axis, in [0, n_k)
  std::vector<double> values;

  std::size_t taps() const noexcept { return offsets.size(); }
  double value(std::size_t co, std::size_t ci, std::size_t t) const {
    return values[(co * in_channels + ci) * taps() + t];
  }
};

/// Extracts the tap set every row reproduces; throws not-equivariant if the
/// rows are not translates of one another (tolerance 1e-12 relative).
inline DenseStencil dense_equivalent(const AssembledKernel& k, const DiscoParams& p) {
  require(k.grid_in && k.grid_out && *k.grid_in == *k.grid_out, ErrorKind::InvalidArgument,
          "dense_equivalent needs grid_in == grid_out");
  const Grid& g = *k.grid_in;
  require(g.topology() == Topology::PeriodicBox && g.is_regular(), ErrorKind::UnsupportedTopology,
          "dense_equivalent needs a regular periodic grid");
  require(p.basis == k.basis, ErrorKind::InvalidArgument, "theta basis count does not match the kernel");
  const auto& shape = g.shape();
  const std::size_t d = g.dim();
  auto multi = [&](std::size_t j) {
    std::vector<long> idx(d);
    for (std::size_t a = d; a-- > 0;) {
      idx[a] = static_cast<long>(j % shape[a]);
      j /= shape[a];
    }
    return idx;
  };
  auto rel = [&](std::size_t i, std::size_t j) {
    auto a = multi(i), b = multi(j);
    std::vector<long> off(d);
    for (std::size_t ax = 0; ax < d; ++ax) {
      const long n = static_cast<long>(shape[ax]);
      off[ax] = ((b[ax] - a[ax]) % n + n) % n;
    }
    return off;
  };
  const std::size_t Co = p.out_channels, Ci = p.in_channels, nnz = k.nnz();
  auto entry_values = [&](std::size_t e, std::vector<double>& out) {
    const double q = k.col_weights[k.col_idx[e]];
    for (std::size_t co = 0; co < Co; ++co)
      for (std::size_t ci = 0; ci < Ci; ++ci) {
        double s = 0.0;
        for (std::size_t l = 0; l < k.basis; ++l) s += p(co, ci, l) * k.values[l * nnz + e];
        out[co * Ci + ci] = s * q;
      }
  };

  DenseStencil st;
  st.out_channels = Co;
  st.in_channels = Ci;
  std::map<std::vector<long>, std::size_t> tap_of;
  std::vector<std::vector<double>> tap_vals;
  std::vector<double> v(Co * Ci);
  double scale = 0.0;
  for (std::size_t e = k.row_ptr[0]; e < k.row_ptr[1]; ++e) {
    entry_values(e, v);
    tap_of[rel(0, k.col_idx[e])] = st.offsets.size();
    st.offsets.push_back(rel(0, k.col_idx[e]));
    tap_vals.push_back(v);
    for (double x : v) scale = std::max(scale, std::abs(x));
  }
  const double tol = 1e-12 * std::max(1.0, scale);
  for (std::size_t i = 1; i < k.rows; ++i) {
    require(k.row_ptr[i + 1] - k.row_ptr[i] == st.taps(), ErrorKind::NotEquivariant,
            "row " + std::to_string(i) + " has a different tap count");
    for (std::size_t e = k.row_ptr[i]; e < k.row_ptr[i + 1]; ++e) {
      const auto it = tap_of.find(rel(i, k.col_idx[e]));
      require(it != tap_of.end(), ErrorKind::NotEquivariant,
              "row " + std::to_string(i) + " is not a translate of row 0");
      entry_values(e, v);
      for (std::size_t c = 0; c < v.size(); ++c)
        require(std::abs(v[c] - tap_vals[it->second][c]) <= tol, ErrorKind::NotEquivariant,
                "row " + std::to_string(i) + " values differ from row 0");
    }
  }
  st.values.resize(Co * Ci * st.taps());
  for (std::size_t t = 0; t < st.taps(); ++t)
    for (std::size_t c = 0; c < Co * Ci; ++c) st.values[c * st.taps() + t] = tap_vals[t][c];
  return st;
}

// ---------------------------------------------------------------------------
// Export: JSON header {L, nnz, rows, cols, grids} + row_ptr and col_idx as
// little-endian uint64, then L value arrays of nnz float64 each.

inline void write_kernel(const AssembledKernel& k, const std::string& path) {
  io::json h;
  h["version"] = 1;
  h["L"] = k.basis;
  h["nnz"] = k.nnz();
  h["rows"] = k.rows;
  h["cols"] = k.cols;
  h["quadrature_folded"] = k.quadrature_folded;
  h["grids"] = {{"in", grid_header(*k.grid_in)}, {"out", grid_header(*k.grid_out)}};
  io::write_container(path, "LNOKERNL", h, [&](std::ostream& os) {
    std::vector<std::uint64_t> rp(k.row_ptr.begin(), k.row_ptr.end());
    std::vector<std::uint64_t> ci(k.col_idx.begin(), k.col_idx.end());
    io::write_array<std::uint64_t>(os, rp);
    io::write_array<std::uint64_t>(os, ci);
    io::write_array<double>(os, k.values);
  });
}

/// Reads the sparse structure back (grids are not reconstructed).
inline AssembledKernel read_kernel(const std::string& path) {
  std::ifstream is;
  const auto h = io::open_container(is, path, "LNOKERNL");
  AssembledKernel k;
  k.basis = h.at("L").get<std::size_t>();
  k.rows = h.at("rows").get<std::size_t>();
  k.cols = h.at("cols").get<std::size_t>();
  k.quadrature_folded = h.at("quadrature_folded").get<bool>();
  const auto nnz = h.at("nnz").get<std::size_t>();
  std::vector<std::uint64_t> rp(k.rows + 1), ci(nnz);
  io::read_array<std::uint64_t>(is, rp, path);
  io::read_array<std::uint64_t>(is, ci, path);
  k.row_ptr.assign(rp.begin(), rp.end());
  k.col_idx.assign(ci.begin(), ci.end());
  k.values.resize(nnz * k.basis);
  io::read_array<double>(is, k.values, path);
  return k;
}

}  // namespace localno
