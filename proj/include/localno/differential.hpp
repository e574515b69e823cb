#pragma once

// Differential convolutions. On regular grids the learnable taps are
// centred per (out, in) slice and scaled by 1/h at forward time, so the
// layer tends to a first-order directional derivative as h -> 0 instead of
// collapsing to a pointwise map. On point clouds, stencil weights come from
// the minimum-norm solution of the moment conditions
//   sum_j k_j = c,   sum_j k_j (x_j - y) = b.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "localno/error.hpp"
#include "localno/field.hpp"
#include "localno/geometry.hpp"

namespace localno {

enum class Padding { Reflective, Periodic, Zero };

inline std::string to_string(Padding p) {
  switch (p) {
    case Padding::Reflective: return "reflective";
    case Padding::Periodic: return "periodic";
    case Padding::Zero: return "zero";
  }
  return "unknown";
}

inline Padding padding_from_string(const std::string& s) {
  if (s == "reflective") return Padding::Reflective;
  if (s == "periodic") return Padding::Periodic;
  if (s == "zero") return Padding::Zero;
  throw Error(ErrorKind::InvalidArgument, "unknown padding '" + s + "'");
}

/// Reflective for bounded boxes, periodic for tori.
inline Padding default_padding(const Grid& g) {
  return g.topology() == Topology::PeriodicBox ? Padding::Periodic : Padding::Reflective;
}

/// Raw taps of shape (out, in, S^dim), taps row-major over the axes with
/// tap t along an axis at integer offset t - (S-1)/2.
struct DifferentialKernel {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t size = 3;
  std::size_t dim = 2;
  Padding padding = Padding::Reflective;
  std::vector<double> taps;

  DifferentialKernel() = default;
  DifferentialKernel(std::size_t co, std::size_t ci, std::size_t s, std::size_t d, Padding pad = Padding::Reflective)
      : out_channels(co), in_channels(ci), size(s), dim(d), padding(pad), taps(co * ci * tap_count(s, d), 0.0) {
    require(s % 2 == 1, ErrorKind::InvalidArgument, "kernel size must be odd");
    require(d == 1 || d == 2, ErrorKind::InvalidArgument, "differential kernels support 1D and 2D grids");
  }

  static std::size_t tap_count(std::size_t s, std::size_t d) { return d == 1 ? s : s * s; }
  std::size_t taps_per_slice() const { return tap_count(size, dim); }
  double& operator()(std::size_t co, std::size_t ci, std::size_t t) {
    return taps[(co * in_channels + ci) * taps_per_slice() + t];
  }
  double operator()(std::size_t co, std::size_t ci, std::size_t t) const {
    return taps[(co * in_channels + ci) * taps_per_slice() + t];
  }
  /// Integer offset of tap t along each axis.
  std::vector<long> offset(std::size_t t) const {
    const long r = static_cast<long>(size - 1) / 2;
    if (dim == 1) return {static_cast<long>(t) - r};
    return {static_cast<long>(t / size) - r, static_cast<long>(t % size) - r};
  }
};

/// First-order signature of a centred kernel: per (out, in) slice the
/// direction b and zeroth-order coefficient c.
struct DirectionalSignature {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t dim = 0;
  std::vector<double> c;  ///< (out, in)
  std::vector<double> b;  ///< (out, in, dim)

  DirectionalSignature() = default;
  DirectionalSignature(std::size_t co, std::size_t ci, std::size_t d)
      : out_channels(co), in_channels(ci), dim(d), c(co * ci, 0.0), b(co * ci * d, 0.0) {}

  double& coef(std::size_t co, std::size_t ci) { return c[co * in_channels + ci]; }
  double coef(std::size_t co, std::size_t ci) const { return c[co * in_channels + ci]; }
  double& dir(std::size_t co, std::size_t ci, std::size_t k) { return b[(co * in_channels + ci) * dim + k]; }
  double dir(std::size_t co, std::size_t ci, std::size_t k) const { return b[(co * in_channels + ci) * dim + k]; }
};

/// Width used for the 1/h scaling. Anisotropic grids use the geometric mean
/// of the per-axis spacings.
inline double scaling_width(std::span<const double> spacing) {
  require(!spacing.empty(), ErrorKind::InvalidArgument, "missing grid spacing");
  for (double h : spacing) require(h > 0.0, ErrorKind::InvalidArgument, "grid width must be > 0");
  double log_sum = 0.0;
  for (double h : spacing) log_sum += std::log(h);
  const bool isotropic =
      std::all_of(spacing.begin(), spacing.end(), [&](double h) { return std::abs(h - spacing[0]) <= 1e-12 * h; });
  return isotropic ? spacing[0] : std::exp(log_sum / static_cast<double>(spacing.size()));
}

inline double scaling_width(const Grid& g) {
  require(g.is_regular() && g.is_planar(), ErrorKind::InvalidArgument,
          "differential layers need a regular box grid with known width");
  if (auto h = g.width()) return *h;
  return scaling_width(g.spacing());
}

/// (K - mean(K)) / h per (out, in) slice.
inline std::vector<double> effective_kernel(const DifferentialKernel& raw, double h) {
  require(h > 0.0 && std::isfinite(h), ErrorKind::InvalidArgument, "h must be > 0");
  const std::size_t T = raw.taps_per_slice();
  std::vector<double> eff(raw.taps.size());
  for (std::size_t s = 0; s < raw.out_channels * raw.in_channels; ++s) {
    const double* k = raw.taps.data() + s * T;
    const double mean = std::accumulate(k, k + T, 0.0) / static_cast<double>(T);
    for (std::size_t t = 0; t < T; ++t) eff[s * T + t] = (k[t] - mean) / h;
  }
  return eff;
}

/// b = sum_t eff_t z_t and c = sum_t eff_t. The 1/h of the effective kernel
/// and the h in z_t are cancelled before multiplying, so b does not depend
/// on h at all on isotropic grids.
inline DirectionalSignature extract_direction(const DifferentialKernel& raw, std::span<const double> spacing) {
  require(spacing.size() == raw.dim, ErrorKind::InvalidArgument, "one spacing per axis required");
  const double h = scaling_width(spacing);
  const std::size_t T = raw.taps_per_slice();
  DirectionalSignature sig(raw.out_channels, raw.in_channels, raw.dim);
  for (std::size_t co = 0; co < raw.out_channels; ++co)
    for (std::size_t ci = 0; ci < raw.in_channels; ++ci) {
      const double* k = raw.taps.data() + (co * raw.in_channels + ci) * T;
      const double mean = std::accumulate(k, k + T, 0.0) / static_cast<double>(T);
      double c = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        const double centred = k[t] - mean;
        c += centred;
        const auto off = raw.offset(t);
        for (std::size_t a = 0; a < raw.dim; ++a)
          sig.dir(co, ci, a) += centred * static_cast<double>(off[a]) * (spacing[a] / h);
      }
      sig.coef(co, ci) = c / h;
    }
  return sig;
}

/// Isotropic width h on every axis.
inline DirectionalSignature extract_direction(const DifferentialKernel& raw, double h) {
  const std::vector<double> spacing(raw.dim, h);
  return extract_direction(raw, spacing);
}

// ---------------------------------------------------------------------------
// Stride-1 cross-correlation on regular grids

namespace detail {

/// Source index of position p + d along an axis of length n, or -1 for a
/// zero-padded position. Reflection excludes the edge sample.
inline long padded_index(long p, long d, long n, Padding pad) {
  long q = p + d;
  if (q >= 0 && q < n) return q;
  switch (pad) {
    case Padding::Zero: return -1;
    case Padding::Periodic: return ((q % n) + n) % n;
    case Padding::Reflective: {
      if (n == 1) return 0;
      const long period = 2 * (n - 1);
      q = ((q % period) + period) % period;
      return q < n ? q : period - q;
    }
  }
  return -1;
}

struct ConvGeometry {
  long rows = 1, cols = 1, radius = 0;
  std::size_t size = 1, dim = 1;
  // maps[axis][d + radius][p]
  std::vector<std::vector<long>> row_map, col_map;

  ConvGeometry(std::span<const std::size_t> shape, std::size_t s, std::size_t d, Padding pad) : size(s), dim(d) {
    require(shape.size() == d, ErrorKind::InvalidArgument, "kernel dimension does not match grid");
    radius = static_cast<long>(s - 1) / 2;
    rows = d == 1 ? 1 : static_cast<long>(shape[0]);
    cols = static_cast<long>(shape[d - 1]);
    const long row_radius = d == 1 ? 0 : radius;
    for (long o = -row_radius; o <= row_radius; ++o) {
      std::vector<long> m(static_cast<std::size_t>(rows));
      for (long p = 0; p < rows; ++p) m[static_cast<std::size_t>(p)] = padded_index(p, o, rows, pad);
      row_map.push_back(std::move(m));
    }
    for (long o = -radius; o <= radius; ++o) {
      std::vector<long> m(static_cast<std::size_t>(cols));
      for (long p = 0; p < cols; ++p) m[static_cast<std::size_t>(p)] = padded_index(p, o, cols, pad);
      col_map.push_back(std::move(m));
    }
  }

  std::size_t points() const { return static_cast<std::size_t>(rows * cols); }
  long row_offset(std::size_t t) const { return dim == 1 ? 0 : static_cast<long>(t / size) - radius; }
  long col_offset(std::size_t t) const { return static_cast<long>(dim == 1 ? t : t % size) - radius; }

  /// dst[p] += w * src[p + offset(t)], or w * (src[p + offset(t)] - src[p])
  /// when `centered`. The difference form makes constants vanish exactly.
  void accumulate(const double* src, double* dst, double w, std::size_t t, bool centered = false) const {
    const long dr = row_offset(t), dc = col_offset(t);
    if (centered && dr == 0 && dc == 0) return;
    const auto& rm = row_map[static_cast<std::size_t>(dr + (dim == 1 ? 0 : radius))];
    const auto& cm = col_map[static_cast<std::size_t>(dc + radius)];
    const long lo = std::min(radius, cols), hi = std::max(lo, cols - radius);
    for (long r = 0; r < rows; ++r) {
      const long sr = rm[static_cast<std::size_t>(r)];
      double* o = dst + r * cols;
      const double* own = src + r * cols;
      if (sr < 0) {
        if (centered)
          for (long c = 0; c < cols; ++c) o[c] -= w * own[c];
        continue;
      }
      const double* s = src + sr * cols;
      auto edge = [&](long c) {
        const long m = cm[static_cast<std::size_t>(c)];
        const double v = m >= 0 ? s[m] : 0.0;
        o[c] += w * (centered ? v - own[c] : v);
      };
      for (long c = 0; c < lo; ++c) edge(c);
      const double* sc = s + dc;
      if (centered) {
        for (long c = lo; c < hi; ++c) o[c] += w * (sc[c] - own[c]);
      } else {
        for (long c = lo; c < hi; ++c) o[c] += w * sc[c];
      }
      for (long c = hi; c < cols; ++c) edge(c);
    }
  }

  /// dst[p] = src[p + offset(t)] - src[p], overwriting dst, for the grid
  /// rows [r0, r1); dst is indexed from the first point of row r0.
  void difference(const double* src, double* dst, std::size_t t, long r0, long r1) const {
    const long dr = row_offset(t), dc = col_offset(t);
    if (dr == 0 && dc == 0) {
      std::fill(dst, dst + (r1 - r0) * cols, 0.0);
      return;
    }
    const auto& rm = row_map[static_cast<std::size_t>(dr + (dim == 1 ? 0 : radius))];
    const auto& cm = col_map[static_cast<std::size_t>(dc + radius)];
    const long lo = std::min(radius, cols), hi = std::max(lo, cols - radius);
    for (long r = r0; r < r1; ++r) {
      const long sr = rm[static_cast<std::size_t>(r)];
      double* o = dst + (r - r0) * cols;
      const double* own = src + r * cols;
      if (sr < 0) {
        for (long c = 0; c < cols; ++c) o[c] = -own[c];
        continue;
      }
      const double* s = src + sr * cols;
      for (long c = 0; c < lo; ++c) {
        const long m = cm[static_cast<std::size_t>(c)];
        o[c] = (m >= 0 ? s[m] : 0.0) - own[c];
      }
      const double* sc = s + dc;
      for (long c = lo; c < hi; ++c) o[c] = sc[c] - own[c];
      for (long c = hi; c < cols; ++c) {
        const long m = cm[static_cast<std::size_t>(c)];
        o[c] = (m >= 0 ? s[m] : 0.0) - own[c];
      }
    }
  }

  void difference(const double* src, double* dst, std::size_t t) const { difference(src, dst, t, 0, rows); }

  /// Adjoint of accumulate(src, dst, 1, t, centered) with respect to src.
  void scatter_unit(const double* g, double* dst, std::size_t t, bool centered) const {
    const long dr = row_offset(t), dc = col_offset(t);
    if (centered && dr == 0 && dc == 0) return;
    const auto& rm = row_map[static_cast<std::size_t>(dr + (dim == 1 ? 0 : radius))];
    const auto& cm = col_map[static_cast<std::size_t>(dc + radius)];
    const long lo = std::min(radius, cols), hi = std::max(lo, cols - radius);
    for (long r = 0; r < rows; ++r) {
      const long sr = rm[static_cast<std::size_t>(r)];
      const double* gr = g + r * cols;
      if (centered) {
        double* own = dst + r * cols;
        for (long c = 0; c < cols; ++c) own[c] -= gr[c];
      }
      if (sr < 0) continue;
      double* o = dst + sr * cols;
      for (long c = 0; c < lo; ++c)
        if (const long m = cm[static_cast<std::size_t>(c)]; m >= 0) o[m] += gr[c];
      double* oc = o + dc;
      for (long c = lo; c < hi; ++c) oc[c] += gr[c];
      for (long c = hi; c < cols; ++c)
        if (const long m = cm[static_cast<std::size_t>(c)]; m >= 0) o[m] += gr[c];
    }
  }

  /// Adjoint of accumulate with respect to src; also returns the derivative
  /// of <src_upstream, accumulate(x)> with respect to w.
  double scatter(const double* g, double* dst, const double* x, double w, std::size_t t, bool centered = false) const {
    const long dr = row_offset(t), dc = col_offset(t);
    if (centered && dr == 0 && dc == 0) return 0.0;
    const auto& rm = row_map[static_cast<std::size_t>(dr + (dim == 1 ? 0 : radius))];
    const auto& cm = col_map[static_cast<std::size_t>(dc + radius)];
    const long lo = std::min(radius, cols), hi = std::max(lo, cols - radius);
    double dot = 0.0;
    for (long r = 0; r < rows; ++r) {
      const long sr = rm[static_cast<std::size_t>(r)];
      const double* gr = g + r * cols;
      double* own_d = dst + r * cols;
      const double* own_x = x + r * cols;
      if (centered)
        for (long c = 0; c < cols; ++c) {
          own_d[c] -= w * gr[c];
          dot -= gr[c] * own_x[c];
        }
      if (sr < 0) continue;
      double* o = dst + sr * cols;
      const double* xs = x + sr * cols;
      auto edge = [&](long c) {
        const long m = cm[static_cast<std::size_t>(c)];
        if (m < 0) return;
        o[m] += w * gr[c];
        dot += gr[c] * xs[m];
      };
      for (long c = 0; c < lo; ++c) edge(c);
      double* oc = o + dc;
      const double* xc = xs + dc;
      for (long c = lo; c < hi; ++c) {
        oc[c] += w * gr[c];
        dot += gr[c] * xc[c];
      }
      for (long c = hi; c < cols; ++c) edge(c);
    }
    return dot;
  }
};

using TapMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Difference matrix restricted to grid rows [r0, r1).
template <class Kernel>
void difference_matrix(const ConvGeometry& geo, const Kernel& raw, const Field& input, std::size_t b, TapMatrix& D,
                       long r0, long r1) {
  const std::size_t T = raw.taps_per_slice();
  D.resize(static_cast<Eigen::Index>(raw.in_channels * T), (r1 - r0) * geo.cols);
  for (std::size_t ci = 0; ci < raw.in_channels; ++ci) {
    const double* src = input.channel(b, ci).data();
    for (std::size_t t = 0; t < T; ++t)
      geo.difference(src, D.row(static_cast<Eigen::Index>(ci * T + t)).data(), t, r0, r1);
  }
}

template <class Kernel>
void difference_matrix(const ConvGeometry& geo, const Kernel& raw, const Field& input, std::size_t b, TapMatrix& D) {
  difference_matrix(geo, raw, input, b, D, 0, geo.rows);
}

/// Grid rows per block of the forward product, so the difference matrix
/// stays near kForwardBlockPoints columns on large grids.
inline constexpr long kForwardBlockPoints = 8192;

}  // namespace detail

/// Plain stride-1 cross-correlation out(y) = sum_t taps_t v(y + z_t) with the
/// given padding; no centring and no width scaling. `centered` switches to
/// sum_t taps_t (v(y + z_t) - v(y)). `taps` has the layout of
/// DifferentialKernel::taps.
inline Field cross_correlate(std::span<const double> taps, std::size_t out_channels, std::size_t in_channels,
                             std::size_t size, Padding padding, std::span<const std::size_t> shape, const Field& input,
                             bool centered = false) {
  const detail::ConvGeometry geo(shape, size, shape.size(), padding);
  require_shape(input, in_channels, geo.points(), "convolution input");
  const std::size_t T = DifferentialKernel::tap_count(size, shape.size());
  require(taps.size() == out_channels * in_channels * T, ErrorKind::InvalidArgument, "tap array has the wrong size");
  Field out(input.batch(), out_channels, geo.points());
  for (std::size_t b = 0; b < input.batch(); ++b)
    for (std::size_t co = 0; co < out_channels; ++co) {
      double* dst = out.channel(b, co).data();
      for (std::size_t ci = 0; ci < in_channels; ++ci) {
        const double* src = input.channel(b, ci).data();
        const double* k = taps.data() + (co * in_channels + ci) * T;
        for (std::size_t t = 0; t < T; ++t)
          if (k[t] != 0.0) geo.accumulate(src, dst, k[t], t, centered);
      }
    }
  return out;
}

/// Cross-correlation with effective_kernel(raw, h), h read from the grid,
/// evaluated as sum_t K_t (v(y + z_t) - v(y)); identical to the plain sum
/// because the effective kernel has zero mean, but exact on constants.
///
/// Evaluated as one matrix product per sample against the difference matrix
/// D[ci*T + t, p] = v_ci(p + z_t) - v_ci(p).
inline Field diff_conv_forward(const DifferentialKernel& raw, const Grid& grid, const Field& input) {
  const double h = scaling_width(grid);
  const auto eff = effective_kernel(raw, h);
  const detail::ConvGeometry geo(grid.shape(), raw.size, raw.dim, raw.padding);
  require_shape(input, raw.in_channels, geo.points(), "convolution input");
  const auto T = static_cast<Eigen::Index>(raw.taps_per_slice());
  const auto Co = static_cast<Eigen::Index>(raw.out_channels), K = static_cast<Eigen::Index>(raw.in_channels) * T;
  const auto N = static_cast<Eigen::Index>(geo.points());
  const detail::TapMatrix E = Eigen::Map<const detail::TapMatrix>(eff.data(), Co, K);
  Field out(input.batch(), raw.out_channels, geo.points());
  detail::TapMatrix D;
  const long block = std::max(1L, detail::kForwardBlockPoints / geo.cols);
  using Strided = Eigen::Map<detail::TapMatrix, 0, Eigen::OuterStride<>>;
  for (std::size_t b = 0; b < input.batch(); ++b)
    for (long r0 = 0; r0 < geo.rows; r0 += block) {
      const long r1 = std::min(geo.rows, r0 + block);
      detail::difference_matrix(geo, raw, input, b, D, r0, r1);
      Strided Y(out.sample(b).data() + r0 * geo.cols, Co, (r1 - r0) * geo.cols, Eigen::OuterStride<>(N));
      Y.noalias() = E * D;
    }
  return out;
}

struct DiffConvGrads {
  std::vector<double> taps;  ///< gradient w.r.t. the raw taps
  Field input;
};

/// Adjoint of diff_conv_forward. The tap gradient passes back through the
/// 1/h scaling and the centring projection.
inline DiffConvGrads diff_conv_vjp(const DifferentialKernel& raw, const Grid& grid, const Field& input,
                                   const Field& upstream) {
  const double h = scaling_width(grid);
  const auto eff = effective_kernel(raw, h);
  const detail::ConvGeometry geo(grid.shape(), raw.size, raw.dim, raw.padding);
  require_shape(input, raw.in_channels, geo.points(), "convolution input");
  require(upstream.batch() == input.batch(), ErrorKind::InvalidArgument, "upstream batch mismatch");
  require_shape(upstream, raw.out_channels, geo.points(), "convolution upstream");
  const std::size_t T = raw.taps_per_slice();
  DiffConvGrads g{std::vector<double>(raw.taps.size(), 0.0), Field(input.batch(), raw.in_channels, geo.points())};
  std::vector<double> g_eff(raw.taps.size(), 0.0);
  const auto Co = static_cast<Eigen::Index>(raw.out_channels);
  const auto K = static_cast<Eigen::Index>(raw.in_channels * T), N = static_cast<Eigen::Index>(geo.points());
  const detail::TapMatrix E = Eigen::Map<const detail::TapMatrix>(eff.data(), Co, K);
  detail::TapMatrix gE = detail::TapMatrix::Zero(Co, K);
  detail::TapMatrix D(K, N), gD(K, N);
  for (std::size_t b = 0; b < input.batch(); ++b) {
    detail::difference_matrix(geo, raw, input, b, D);
    Eigen::Map<const detail::TapMatrix> G(upstream.sample(b).data(), Co, N);
    gE.noalias() += G * D.transpose();
    gD.noalias() = E.transpose() * G;
    for (std::size_t ci = 0; ci < raw.in_channels; ++ci) {
      double* gin = g.input.channel(b, ci).data();
      for (std::size_t t = 0; t < T; ++t)
        geo.scatter_unit(gD.row(static_cast<Eigen::Index>(ci * T + t)).data(), gin, t, true);
    }
  }
  Eigen::Map<detail::TapMatrix>(g_eff.data(), Co, K) = gE;
  for (std::size_t s = 0; s < raw.out_channels * raw.in_channels; ++s) {
    const double* ge = g_eff.data() + s * T;
    const double mean = std::accumulate(ge, ge + T, 0.0) / static_cast<double>(T);
    for (std::size_t t = 0; t < T; ++t) g.taps[s * T + t] = (ge[t] - mean) / h;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Irregular point sets

/// Minimum-norm weights with sum_j w_j = c and sum_j w_j (x_j - y) = b.
/// `neighbors` holds m points of dimension center.size(), flattened.
inline std::vector<double> solve_irregular_stencil(std::span<const double> center, std::span<const double> neighbors,
                                                   double c, std::span<const double> b) {
  const std::size_t d = center.size();
  require(d >= 1 && b.size() == d, ErrorKind::InvalidArgument, "target direction must match the point dimension");
  require(neighbors.size() % d == 0, ErrorKind::InvalidArgument, "neighbor array is not a multiple of dim");
  const std::size_t m = neighbors.size() / d;
  require(m >= d + 1, ErrorKind::DegenerateNeighborhood,
          "need at least dim+1 neighbors, got " + std::to_string(m));
  // Offsets are rescaled by the neighbourhood radius for conditioning; the
  // moment equations scale with them, the minimum-norm solution does not.
  double scale = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += std::pow(neighbors[j * d + k] - center[k], 2);
    scale = std::max(scale, std::sqrt(s));
  }
  require(scale > 0.0, ErrorKind::DegenerateNeighborhood, "all neighbors coincide with the center");
  Eigen::MatrixXd A(static_cast<Eigen::Index>(d + 1), static_cast<Eigen::Index>(m));
  for (std::size_t j = 0; j < m; ++j) {
    A(0, static_cast<Eigen::Index>(j)) = 1.0;
    for (std::size_t k = 0; k < d; ++k)
      A(static_cast<Eigen::Index>(k + 1), static_cast<Eigen::Index>(j)) = (neighbors[j * d + k] - center[k]) / scale;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  require(sv(sv.size() - 1) > 1e-10 * sv(0), ErrorKind::DegenerateNeighborhood,
          "neighborhood does not affinely span the space (rank < dim+1)");
  Eigen::VectorXd t(static_cast<Eigen::Index>(d + 1));
  t(0) = c;
  for (std::size_t k = 0; k < d; ++k) t(static_cast<Eigen::Index>(k + 1)) = b[k] / scale;
  const Eigen::VectorXd w = svd.solve(t);
  return {w.data(), w.data() + w.size()};
}

/// Per-point pseudo-inverse of the moment matrix, so any signature (c, b)
/// turns into stencil weights with one small product.
class IrregularStencil {
 public:
  IrregularStencil(const Grid& grid, std::vector<std::vector<std::size_t>> neighborhoods)
      : dim_(grid.dim()), points_(grid.size()), nbrs_(std::move(neighborhoods)) {
    require(nbrs_.size() == grid.size(), ErrorKind::InvalidArgument, "one neighborhood per point required");
    basis_.resize(points_);
    std::vector<double> pts, unit(dim_);
    for (std::size_t i = 0; i < points_; ++i) {
      pts.clear();
      for (std::size_t j : nbrs_[i]) {
        require(j < points_, ErrorKind::InvalidArgument, "neighbor index out of range");
        for (std::size_t k = 0; k < dim_; ++k) pts.push_back(grid.coord(j, k));
      }
      // columns of the pseudo-inverse: targets e_0 .. e_d
      auto& cols = basis_[i];
      cols.assign((dim_ + 1) * nbrs_[i].size(), 0.0);
      try {
        for (std::size_t r = 0; r <= dim_; ++r) {
          std::fill(unit.begin(), unit.end(), 0.0);
          if (r > 0) unit[r - 1] = 1.0;
          const auto w = solve_irregular_stencil(grid.point(i), pts, r == 0 ? 1.0 : 0.0, unit);
          std::copy(w.begin(), w.end(), cols.begin() + static_cast<long>(r * nbrs_[i].size()));
        }
      } catch (const Error& e) {
        throw Error(ErrorKind::DegenerateNeighborhood, "point " + std::to_string(i) + ": " + e.what());
      }
    }
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t points() const noexcept { return points_; }
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return nbrs_[i]; }

  /// Stencil weights at point i for target (c, b).
  std::vector<double> weights(std::size_t i, double c, std::span<const double> b) const {
    const std::size_t m = nbrs_[i].size();
    std::vector<double> w(m);
    for (std::size_t j = 0; j < m; ++j) {
      double s = c * basis_[i][j];
      for (std::size_t k = 0; k < dim_; ++k) s += b[k] * basis_[i][(k + 1) * m + j];
      w[j] = s;
    }
    return w;
  }

  /// out[co, i] = sum_ci sum_j k_j(c[co,ci], b[co,ci]) in[ci, nbr_j(i)].
  Field apply(const DirectionalSignature& sig, const Field& input) const {
    require(sig.dim == dim_, ErrorKind::InvalidArgument, "signature dimension does not match the grid");
    require_shape(input, sig.in_channels, points_, "irregular stencil input");
    Field out(input.batch(), sig.out_channels, points_);
    for (std::size_t i = 0; i < points_; ++i)
      for (std::size_t co = 0; co < sig.out_channels; ++co)
        for (std::size_t ci = 0; ci < sig.in_channels; ++ci) {
          const auto w = weights(i, sig.coef(co, ci),
                                 std::span<const double>(sig.b.data() + (co * sig.in_channels + ci) * dim_, dim_));
          for (std::size_t b = 0; b < input.batch(); ++b) {
            const auto x = input.channel(b, ci);
            double s = 0.0;
            for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * x[nbrs_[i][j]];
            out(b, co, i) += s;
          }
        }
    return out;
  }

 private:
  std::size_t dim_;
  std::size_t points_;
  std::vector<std::vector<std::size_t>> nbrs_;
  std::vector<std::vector<double>> basis_;
};

inline Field irregular_diff_forward(const Grid& grid, const std::vector<std::vector<std::size_t>>& neighborhoods,
                                    const DirectionalSignature& sig, const Field& input) {
  return IrregularStencil(grid, neighborhoods).apply(sig, input);
}

}  // namespace localno
