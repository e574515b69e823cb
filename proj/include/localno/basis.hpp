#pragma once

// Compactly supported piecewise-linear filter bases for DISCO convolutions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "localno/error.hpp"
#include "localno/vendor_json.hpp"

namespace localno {

/// 1D hat functions on nodes xi_0 < xi_1 < ... < xi_{L+1}; function l
/// (1-based in the nodes, 0-based in the returned values) rises on
/// [xi_{l-1}, xi_l) and falls on [xi_l, xi_{l+1}).
class HatBasis1D {
 public:
  /// `nodes` holds the left boundary, the L collocation points and the right
  /// boundary, strictly increasing.
  explicit HatBasis1D(std::vector<double> nodes) : nodes_(std::move(nodes)) {
    require(nodes_.size() >= 3, ErrorKind::InvalidArgument, "hat basis needs at least one collocation point");
    for (std::size_t i = 1; i < nodes_.size(); ++i)
      require(nodes_[i] > nodes_[i - 1], ErrorKind::InvalidArgument, "hat basis nodes must be strictly increasing");
  }

  /// L equidistant collocation points first, first+spacing, ...; boundary
  /// points one spacing outside.
  static HatBasis1D equidistant(std::size_t count, double spacing, double first = 0.0) {
    require(count >= 1 && spacing > 0.0, ErrorKind::InvalidArgument, "need count >= 1 and spacing > 0");
    std::vector<double> nodes;
    for (std::size_t l = 0; l < count + 2; ++l) nodes.push_back(first + (static_cast<double>(l) - 1.0) * spacing);
    return HatBasis1D(std::move(nodes));
  }

  std::size_t size() const noexcept { return nodes_.size() - 2; }
  double collocation(std::size_t l) const { return nodes_[l + 1]; }
  double lower() const noexcept { return nodes_.front(); }
  double cutoff() const noexcept { return nodes_.back(); }
  const std::vector<double>& nodes() const noexcept { return nodes_; }
  double min_spacing() const {
    double s = nodes_[1] - nodes_[0];
    for (std::size_t i = 2; i < nodes_.size(); ++i) s = std::min(s, nodes_[i] - nodes_[i - 1]);
    return s;
  }

  void eval(double x, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    if (!(x >= nodes_.front() && x < nodes_.back())) return;
    // x lies in [nodes_[k], nodes_[k+1]) for exactly one k
    const auto it = std::upper_bound(nodes_.begin(), nodes_.end(), x);
    const std::size_t k = static_cast<std::size_t>(it - nodes_.begin()) - 1;
    const double t = (x - nodes_[k]) / (nodes_[k + 1] - nodes_[k]);
    // falling part of function k (node index k >= 1), rising part of k+1
    if (k >= 1) out[k - 1] = 1.0 - t;
    if (k + 1 <= size()) out[k] = t;
  }

  std::vector<double> eval(double x) const {
    std::vector<double> out(size());
    eval(x, out);
    return out;
  }

  bool operator==(const HatBasis1D&) const = default;

 private:
  std::vector<double> nodes_;
};

/// One isotropic centre hat plus `rings` x `azimuth` products of a radial
/// hat and a periodic azimuthal hat. Ring k (1-based) sits at radius
/// k*dr with dr = cutoff/(rings+1); azimuthal collocation a*2pi/azimuth.
/// Value index 0 is the centre, then ring-major, azimuth-minor.
class RadialAnisotropicBasis {
 public:
  RadialAnisotropicBasis(double cutoff, std::size_t rings, std::size_t azimuth)
      : cutoff_(cutoff), rings_(rings), azimuth_(azimuth) {
    require(cutoff > 0.0 && std::isfinite(cutoff), ErrorKind::InvalidArgument, "r_cutoff must be > 0");
    require(azimuth >= 1 || rings == 0, ErrorKind::InvalidArgument, "rings need at least one azimuthal point");
  }

  std::size_t size() const noexcept { return 1 + rings_ * azimuth_; }
  double cutoff() const noexcept { return cutoff_; }
  std::size_t rings() const noexcept { return rings_; }
  std::size_t azimuth() const noexcept { return azimuth_; }
  double ring_spacing() const noexcept { return cutoff_ / static_cast<double>(rings_ + 1); }
  std::size_t index(std::size_t ring, std::size_t az) const { return 1 + (ring - 1) * azimuth_ + az; }
  double min_spacing() const {
    const double dr = ring_spacing();
    return azimuth_ > 0 ? std::min(dr, 2.0 * std::numbers::pi / static_cast<double>(azimuth_)) : dr;
  }

  void eval(double radial, double azimuthal, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    if (!(radial >= 0.0) || radial >= cutoff_) return;
    const double dr = ring_spacing();
    const double r = radial / dr;
    out[0] = std::max(0.0, 1.0 - r);
    if (rings_ == 0) return;
    // azimuthal hats: the two neighbouring collocation points
    const double two_pi = 2.0 * std::numbers::pi;
    double phi = std::fmod(azimuthal, two_pi);
    if (phi < 0.0) phi += two_pi;
    const double s = phi / (two_pi / static_cast<double>(azimuth_));
    std::size_t a0 = static_cast<std::size_t>(std::floor(s));
    double t = s - static_cast<double>(a0);
    if (a0 >= azimuth_) {
      a0 = 0;
      t = 0.0;
    }
    const std::size_t a1 = (a0 + 1) % azimuth_;
    for (std::size_t k = 1; k <= rings_; ++k) {
      const double w = std::max(0.0, 1.0 - std::abs(r - static_cast<double>(k)));
      if (w == 0.0) continue;
      out[index(k, a0)] += w * (1.0 - t);
      out[index(k, a1)] += w * t;
    }
  }

  std::vector<double> eval(double radial, double azimuthal) const {
    std::vector<double> out(size());
    eval(radial, azimuthal, out);
    return out;
  }

  bool operator==(const RadialAnisotropicBasis&) const = default;

 private:
  double cutoff_;
  std::size_t rings_;
  std::size_t azimuth_;
};

/// One centre function plus one ring of four azimuthal hats (L = 5).
inline RadialAnisotropicBasis default_planar_basis(double cutoff = 0.007) { return {cutoff, 1, 4}; }
inline RadialAnisotropicBasis default_torus_basis() { return {0.05 * std::numbers::pi, 1, 4}; }
inline RadialAnisotropicBasis default_sphere_basis() { return {0.1 * std::numbers::pi, 1, 4}; }

using KernelBasis = std::variant<HatBasis1D, RadialAnisotropicBasis>;

inline std::size_t basis_size(const KernelBasis& b) {
  return std::visit([](const auto& x) { return x.size(); }, b);
}

/// Largest offset magnitude with a nonzero basis value.
inline double support_radius(const KernelBasis& b) {
  if (const auto* hat = std::get_if<HatBasis1D>(&b)) return std::max(std::abs(hat->lower()), std::abs(hat->cutoff()));
  return std::get<RadialAnisotropicBasis>(b).cutoff();
}

// Config description: {"kind": "radial", "r_cutoff", "rings", "azimuth"} or
// {"kind": "hat1d", "nodes": [...]}.
inline nlohmann::json basis_to_json(const KernelBasis& b) {
  if (const auto* hat = std::get_if<HatBasis1D>(&b)) return {{"kind", "hat1d"}, {"nodes", hat->nodes()}};
  const auto& r = std::get<RadialAnisotropicBasis>(b);
  return {{"kind", "radial"}, {"r_cutoff", r.cutoff()}, {"rings", r.rings()}, {"azimuth", r.azimuth()}};
}

inline KernelBasis basis_from_json(const nlohmann::json& j) {
  const std::string kind = j.value("kind", "radial");
  if (kind == "hat1d") return HatBasis1D(j.at("nodes").get<std::vector<double>>());
  if (kind == "radial")
    return RadialAnisotropicBasis(j.value("r_cutoff", 0.007), j.value("rings", std::size_t{1}),
                                  j.value("azimuth", std::size_t{4}));
  throw Error(ErrorKind::InvalidArgument, "unknown basis kind '" + kind + "'");
}

}  // namespace localno
