#pragma once

// Grids, quadrature rules and the group actions the convolutions consume:
// integer translations on periodic boxes and rotations on the sphere.

#include <algorithm>
#include <array>
#include <filesystem>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "localno/binary_io.hpp"
#include "localno/error.hpp"
#include "localno/field.hpp"

namespace localno {

enum class Topology { PeriodicBox, BoundedBox, Sphere, Unstructured };

inline std::string to_string(Topology t) {
  switch (t) {
    case Topology::PeriodicBox: return "periodic_box";
    case Topology::BoundedBox: return "bounded_box";
    case Topology::Sphere: return "sphere";
    case Topology::Unstructured: return "unstructured";
  }
  return "unknown";
}

inline Topology topology_from_string(const std::string& s) {
  if (s == "periodic_box") return Topology::PeriodicBox;
  if (s == "bounded_box") return Topology::BoundedBox;
  if (s == "sphere") return Topology::Sphere;
  if (s == "unstructured") return Topology::Unstructured;
  throw Error(ErrorKind::InvalidArgument, "unknown topology '" + s + "'");
}

/// Discretization points with quadrature weights.
///
/// Regular boxes are stored row-major with the last axis fastest; coordinate k
/// of a point is along axis k. Sphere points are (colatitude, longitude) with
/// colatitude rows outermost. Immutable after construction.
class Grid {
 public:
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return weights_.size(); }
  Topology topology() const noexcept { return topology_; }
  bool is_regular() const noexcept { return !shape_.empty(); }
  bool is_periodic_box() const noexcept { return topology_ == Topology::PeriodicBox; }
  bool is_planar() const noexcept { return topology_ != Topology::Sphere; }

  std::span<const double> point(std::size_t j) const { return {points_.data() + j * dim_, dim_}; }
  double coord(std::size_t j, std::size_t k) const { return points_[j * dim_ + k]; }
  std::span<const double> points() const noexcept { return points_; }
  std::span<const double> weights() const noexcept { return weights_; }
  double weight(std::size_t j) const { return weights_[j]; }

  /// Per-axis point counts; empty for unstructured grids.
  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  /// Per-axis domain lengths (boxes only).
  const std::vector<double>& extent() const noexcept { return extent_; }
  /// Per-axis spacing (regular grids only).
  const std::vector<double>& spacing() const noexcept { return spacing_; }
  /// Isotropic spacing h when every axis has the same spacing.
  std::optional<double> width() const noexcept { return width_; }

  bool operator==(const Grid&) const = default;

  friend Grid make_regular_grid(std::span<const std::size_t>, std::span<const double>, bool);
  friend Grid make_equiangular_sphere_grid(std::size_t, std::size_t);
  friend Grid make_unstructured_grid(std::size_t, std::vector<double>, std::vector<double>, std::vector<double>);
  friend Grid read_grid(const std::string&);

 private:
  std::size_t dim_ = 0;
  Topology topology_ = Topology::Unstructured;
  std::vector<double> points_;
  std::vector<double> weights_;
  std::vector<std::size_t> shape_;
  std::vector<double> extent_;
  std::vector<double> spacing_;
  std::optional<double> width_;

  void validate() const {
    for (double q : weights_)
      require(q > 0.0 && std::isfinite(q), ErrorKind::InvalidArgument, "quadrature weights must be positive");
    require(points_.size() == weights_.size() * dim_, ErrorKind::InvalidArgument, "point/weight count mismatch");
  }
};

/// Equidistant box grid. Periodic: x_i = i*L/n, q = prod h_k, no seam
/// duplicate. Bounded: x_i = i*L/(n-1) including both ends, trapezoidal
/// weights (half weight on each boundary layer per axis).
inline Grid make_regular_grid(std::span<const std::size_t> shape, std::span<const double> extent, bool periodic) {
  require(!shape.empty() && shape.size() == extent.size(), ErrorKind::InvalidArgument,
          "shape and extent must have the same nonzero length");
  for (std::size_t k = 0; k < shape.size(); ++k) {
    require(shape[k] >= 2, ErrorKind::InvalidArgument, "grid counts must be >= 2");
    require(extent[k] > 0.0 && std::isfinite(extent[k]), ErrorKind::InvalidArgument, "grid extents must be > 0");
  }
  Grid g;
  g.dim_ = shape.size();
  g.topology_ = periodic ? Topology::PeriodicBox : Topology::BoundedBox;
  g.shape_.assign(shape.begin(), shape.end());
  g.extent_.assign(extent.begin(), extent.end());
  for (std::size_t k = 0; k < g.dim_; ++k)
    g.spacing_.push_back(periodic ? extent[k] / static_cast<double>(shape[k])
                                  : extent[k] / static_cast<double>(shape[k] - 1));
  if (std::all_of(g.spacing_.begin(), g.spacing_.end(),
                  [&](double h) { return std::abs(h - g.spacing_[0]) <= 1e-12 * g.spacing_[0]; }))
    g.width_ = g.spacing_[0];

  std::size_t m = 1;
  for (auto n : shape) m *= n;
  g.points_.resize(m * g.dim_);
  g.weights_.resize(m);
  std::vector<std::size_t> idx(g.dim_, 0);
  for (std::size_t j = 0; j < m; ++j) {
    double q = 1.0;
    for (std::size_t k = 0; k < g.dim_; ++k) {
      g.points_[j * g.dim_ + k] = static_cast<double>(idx[k]) * g.spacing_[k];
      const bool edge = !periodic && (idx[k] == 0 || idx[k] + 1 == shape[k]);
      q *= edge ? 0.5 * g.spacing_[k] : g.spacing_[k];
    }
    g.weights_[j] = q;
    for (std::size_t k = g.dim_; k-- > 0;) {
      if (++idx[k] < shape[k]) break;
      idx[k] = 0;
    }
  }
  return g;
}

inline Grid make_regular_grid(std::initializer_list<std::size_t> shape, std::initializer_list<double> extent,
                              bool periodic) {
  return make_regular_grid(std::span<const std::size_t>(shape.begin(), shape.size()),
                           std::span<const double>(extent.begin(), extent.size()), periodic);
}

/// Square grid on the unit box, the common case for the Darcy and parabola tasks.
inline Grid make_unit_square(std::size_t n, bool periodic = false) {
  const std::size_t shape[] = {n, n};
  const double extent[] = {1.0, 1.0};
  return make_regular_grid(shape, extent, periodic);
}

/// Equiangular grid with cell-centred colatitudes and exact cell areas
/// q = dlon * (cos t_lo - cos t_hi), so the weights sum to 4*pi.
inline Grid make_equiangular_sphere_grid(std::size_t nlat, std::size_t nlon) {
  require(nlat >= 2, ErrorKind::InvalidArgument, "nlat must be >= 2");
  require(nlon >= 4, ErrorKind::InvalidArgument, "nlon must be >= 4");
  using std::numbers::pi;
  Grid g;
  g.dim_ = 2;
  g.topology_ = Topology::Sphere;
  g.shape_ = {nlat, nlon};
  const double dlat = pi / static_cast<double>(nlat);
  const double dlon = 2.0 * pi / static_cast<double>(nlon);
  g.spacing_ = {dlat, dlon};
  g.points_.reserve(2 * nlat * nlon);
  g.weights_.reserve(nlat * nlon);
  for (std::size_t i = 0; i < nlat; ++i) {
    const double lo = static_cast<double>(i) * dlat;
    const double hi = static_cast<double>(i + 1) * dlat;
    const double theta = (static_cast<double>(i) + 0.5) * dlat;
    const double area = dlon * (std::cos(lo) - std::cos(hi));
    for (std::size_t k = 0; k < nlon; ++k) {
      g.points_.push_back(theta);
      g.points_.push_back(static_cast<double>(k) * dlon);
      g.weights_.push_back(area);
    }
  }
  return g;
}

/// Point cloud in R^dim with caller-supplied quadrature weights. An empty
/// extent means an unbounded Euclidean metric.
inline Grid make_unstructured_grid(std::size_t dim, std::vector<double> points, std::vector<double> weights,
                                   std::vector<double> extent = {}) {
  require(dim >= 1, ErrorKind::InvalidArgument, "dim must be >= 1");
  Grid g;
  g.dim_ = dim;
  g.topology_ = Topology::Unstructured;
  g.points_ = std::move(points);
  g.weights_ = std::move(weights);
  g.extent_ = std::move(extent);
  g.validate();
  return g;
}

// ---------------------------------------------------------------------------
// Sphere rotations

/// Rotation taking the north pole to (colatitude, longitude), first Euler
/// angle fixed to zero: R = Rz(longitude) * Ry(colatitude).
struct SphereRotation {
  double colatitude = 0.0;
  double longitude = 0.0;

  static SphereRotation at(double colatitude, double longitude) {
    require(colatitude >= 0.0 && colatitude <= std::numbers::pi, ErrorKind::InvalidArgument,
            "colatitude out of [0, pi]");
    double lon = std::fmod(longitude, 2.0 * std::numbers::pi);
    if (lon < 0.0) lon += 2.0 * std::numbers::pi;
    return {colatitude, lon};
  }
};

struct SphereOffset {
  double radial = 0.0;     ///< great-circle distance to the centre, [0, pi]
  double azimuthal = 0.0;  ///< [0, 2*pi)
};

inline std::array<double, 3> sphere_to_cartesian(double colatitude, double longitude) {
  const double s = std::sin(colatitude);
  return {s * std::cos(longitude), s * std::sin(longitude), std::cos(colatitude)};
}

/// Coordinates of `point` after applying the inverse of `center`'s rotation.
inline SphereOffset geodesic_offset(const SphereRotation& center, double colatitude, double longitude) {
  const double dlon = longitude - center.longitude;
  const double st = std::sin(colatitude);
  // Rz(-lon_c) p
  const double x = st * std::cos(dlon);
  const double y = st * std::sin(dlon);
  const double z = std::cos(colatitude);
  // Ry(-theta_c)
  const double ct = std::cos(center.colatitude);
  const double sc = std::sin(center.colatitude);
  const double xr = ct * x - sc * z;
  const double zr = sc * x + ct * z;
  SphereOffset out;
  out.radial = std::atan2(std::hypot(xr, y), zr);
  double az = std::atan2(y, xr);
  if (az < 0.0) az += 2.0 * std::numbers::pi;
  if (az >= 2.0 * std::numbers::pi) az = 0.0;
  out.azimuthal = az;
  return out;
}

// ---------------------------------------------------------------------------
// Translations on periodic boxes

/// Circular shift by integer grid steps: out[i + s] = in[i] along each axis.
inline Field translate_field(const Grid& grid, const Field& field, std::span<const long> steps) {
  require(grid.topology() == Topology::PeriodicBox && grid.is_regular(), ErrorKind::UnsupportedTopology,
          "translate_field needs a regular periodic grid");
  require(steps.size() == grid.dim(), ErrorKind::InvalidArgument, "one step per axis required");
  require(field.points() == grid.size(), ErrorKind::InvalidArgument, "field does not live on grid");
  const auto& shape = grid.shape();
  const std::size_t d = grid.dim();
  std::vector<std::size_t> stride(d, 1);
  for (std::size_t k = d - 1; k-- > 0;) stride[k] = stride[k + 1] * shape[k + 1];
  std::vector<std::size_t> shift(d);
  for (std::size_t k = 0; k < d; ++k) {
    const long n = static_cast<long>(shape[k]);
    shift[k] = static_cast<std::size_t>(((steps[k] % n) + n) % n);
  }
  // destination index of every source point
  std::vector<std::size_t> dest(grid.size());
  std::vector<std::size_t> idx(d, 0);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    std::size_t t = 0;
    for (std::size_t k = 0; k < d; ++k) t += ((idx[k] + shift[k]) % shape[k]) * stride[k];
    dest[j] = t;
    for (std::size_t k = d; k-- > 0;) {
      if (++idx[k] < shape[k]) break;
      idx[k] = 0;
    }
  }
  Field out(field.batch(), field.channels(), field.points());
  for (std::size_t b = 0; b < field.batch(); ++b)
    for (std::size_t c = 0; c < field.channels(); ++c) {
      auto src = field.channel(b, c);
      auto dst = out.channel(b, c);
      for (std::size_t j = 0; j < src.size(); ++j) dst[dest[j]] = src[j];
    }
  return out;
}

inline Field translate_field(const Grid& grid, const Field& field, std::initializer_list<long> steps) {
  return translate_field(grid, field, std::span<const long>(steps.begin(), steps.size()));
}

/// Rotation about the polar axis by whole longitude steps on an equiangular
/// sphere grid: out[lat, lon + s] = in[lat, lon].
inline Field rotate_longitude(const Grid& grid, const Field& field, long steps) {
  require(grid.topology() == Topology::Sphere && grid.is_regular(), ErrorKind::UnsupportedTopology,
          "rotate_longitude needs an equiangular sphere grid");
  require(field.points() == grid.size(), ErrorKind::InvalidArgument, "field does not live on grid");
  const std::size_t nlat = grid.shape()[0], nlon = grid.shape()[1];
  const long n = static_cast<long>(nlon);
  const std::size_t s = static_cast<std::size_t>(((steps % n) + n) % n);
  Field out(field.batch(), field.channels(), field.points());
  for (std::size_t b = 0; b < field.batch(); ++b)
    for (std::size_t c = 0; c < field.channels(); ++c) {
      auto src = field.channel(b, c);
      auto dst = out.channel(b, c);
      for (std::size_t i = 0; i < nlat; ++i)
        for (std::size_t k = 0; k < nlon; ++k) dst[i * nlon + (k + s) % nlon] = src[i * nlon + k];
    }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: JSON header plus a sibling little-endian float64 payload
// holding all point coordinates followed by all weights.

inline io::json grid_header(const Grid& g) {
  io::json h;
  h["dim"] = g.dim();
  h["topology"] = to_string(g.topology());
  h["shape"] = g.shape();
  h["extent"] = g.extent();
  h["points"] = g.size();
  return h;
}

inline void write_grid(const Grid& g, const std::string& json_path) {
  const std::string bin_path = json_path + ".bin";
  io::json h = grid_header(g);
  h["payload"] = std::filesystem::path(bin_path).filename().string();
  {
    std::ofstream os(json_path, std::ios::trunc);
    if (!os) throw Error(ErrorKind::Io, "cannot open for writing: " + json_path);
    os << h.dump(2) << '\n';
  }
  std::ofstream os(bin_path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::Io, "cannot open for writing: " + bin_path);
  io::write_array(os, g.points());
  io::write_array(os, g.weights());
}

inline Grid read_grid(const std::string& json_path) {
  std::ifstream hs(json_path);
  if (!hs) throw Error(ErrorKind::Io, "cannot open: " + json_path);
  io::json h;
  try {
    h = io::json::parse(hs);
  } catch (const io::json::exception& e) {
    throw Error(ErrorKind::IncompatibleDataset, json_path + ": " + e.what());
  }
  const auto topo = topology_from_string(h.at("topology").get<std::string>());
  const auto shape = h.at("shape").get<std::vector<std::size_t>>();
  const auto extent = h.at("extent").get<std::vector<double>>();
  const std::size_t dim = h.at("dim").get<std::size_t>();
  const std::size_t m = h.at("points").get<std::size_t>();
  // Regular grids are regenerated from their description, then checked
  // against the stored payload.
  Grid g;
  if (topo == Topology::Sphere) {
    g = make_equiangular_sphere_grid(shape.at(0), shape.at(1));
  } else if (!shape.empty()) {
    g = make_regular_grid(shape, extent, topo == Topology::PeriodicBox);
  }
  std::vector<double> pts(m * dim), w(m);
  const auto bin = std::filesystem::path(json_path).parent_path() / h.at("payload").get<std::string>();
  std::ifstream bs(bin, std::ios::binary);
  if (!bs) throw Error(ErrorKind::Io, "cannot open: " + bin.string());
  io::read_array<double>(bs, pts, bin.string());
  io::read_array<double>(bs, w, bin.string());
  if (topo == Topology::Unstructured && shape.empty()) return make_unstructured_grid(dim, pts, w, extent);
  g.points_ = std::move(pts);
  g.weights_ = std::move(w);
  g.validate();
  return g;
}

}  // namespace localno
