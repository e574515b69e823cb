#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "localno/geometry.hpp"

namespace localno {

/// Uniform-cell spatial hash over the input points. Cells are at least
/// `radius` wide so a query only visits the 3^d block around its own cell.
class CellIndex {
 public:
  CellIndex(const Grid& g, double radius, bool periodic, std::span<const double> extent) : dim_(g.dim()) {
    lo_.assign(dim_, 0.0);
    std::vector<double> hi(dim_, 0.0);
    for (std::size_t k = 0; k < dim_; ++k) {
      lo_[k] = hi[k] = g.coord(0, k);
      for (std::size_t j = 1; j < g.size(); ++j) {
        lo_[k] = std::min(lo_[k], g.coord(j, k));
        hi[k] = std::max(hi[k], g.coord(j, k));
      }
    }
    periodic_ = periodic;
    cells_.assign(dim_, 1);
    width_.assign(dim_, 1.0);
    for (std::size_t k = 0; k < dim_; ++k) {
      const double span = periodic ? extent[k] : std::max(hi[k] - lo_[k], radius);
      if (periodic) lo_[k] = 0.0;
      const auto n = static_cast<std::size_t>(std::floor(span / radius));
      cells_[k] = std::clamp<std::size_t>(n, 1, 1024);
      width_[k] = span / static_cast<double>(cells_[k]);
    }
    std::size_t total = 1;
    for (auto n : cells_) total *= n;
    start_.assign(total + 1, 0);
    std::vector<std::size_t> cell_of(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) {
      cell_of[j] = cell(g.point(j));
      ++start_[cell_of[j] + 1];
    }
    for (std::size_t c = 0; c < total; ++c) start_[c + 1] += start_[c];
    items_.resize(g.size());
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t j = 0; j < g.size(); ++j) items_[fill[cell_of[j]]++] = j;
  }

  /// Candidate input indices near y (superset of the ball), sorted.
  void query(std::span<const double> y, std::vector<std::size_t>& out) const {
    out.clear();
    std::vector<long> base(dim_);
    for (std::size_t k = 0; k < dim_; ++k) base[k] = coord_cell(y[k], k);
    std::vector<std::size_t> visited;
    std::vector<long> step(dim_, -1);
    while (true) {
      std::size_t flat = 0;
      bool valid = true;
      for (std::size_t k = 0; k < dim_; ++k) {
        long c = base[k] + step[k];
        const long n = static_cast<long>(cells_[k]);
        if (periodic_) {
          c = ((c % n) + n) % n;
        } else if (c < 0 || c >= n) {
          valid = false;
          break;
        }
        flat = flat * cells_[k] + static_cast<std::size_t>(c);
      }
      if (valid && std::find(visited.begin(), visited.end(), flat) == visited.end()) {
        visited.push_back(flat);
        out.insert(out.end(), items_.begin() + static_cast<long>(start_[flat]),
                   items_.begin() + static_cast<long>(start_[flat + 1]));
      }
      std::size_t k = 0;
      for (; k < dim_; ++k) {
        if (++step[k] <= 1) break;
        step[k] = -1;
      }
      if (k == dim_) break;
    }
    std::sort(out.begin(), out.end());
  }

 private:
  std::size_t dim_;
  bool periodic_ = false;
  std::vector<double> lo_, width_;
  std::vector<std::size_t> cells_;
  std::vector<std::size_t> start_, items_;

  long coord_cell(double x, std::size_t k) const {
    const long n = static_cast<long>(cells_[k]);
    long c = static_cast<long>(std::floor((x - lo_[k]) / width_[k]));
    if (periodic_) return ((c % n) + n) % n;
    return std::clamp<long>(c, 0, n - 1);
  }
  std::size_t cell(std::span<const double> y) const {
    std::size_t flat = 0;
    for (std::size_t k = 0; k < dim_; ++k) flat = flat * cells_[k] + static_cast<std::size_t>(coord_cell(y[k], k));
    return flat;
  }
};

/// Indices of all points within `radius` (open ball, Euclidean metric) of
/// each point, including the point itself, ascending.
inline std::vector<std::vector<std::size_t>> ball_neighborhoods(const Grid& g, double radius) {
  std::vector<std::vector<std::size_t>> out(g.size());
  const CellIndex index(g, radius, false, {});
  std::vector<std::size_t> cand;
  for (std::size_t i = 0; i < g.size(); ++i) {
    index.query(g.point(i), cand);
    for (std::size_t j : cand) {
      double s = 0.0;
      for (std::size_t k = 0; k < g.dim(); ++k) {
        const double d = g.coord(j, k) - g.coord(i, k);
        s += d * d;
      }
      if (std::sqrt(s) < radius) out[i].push_back(j);
    }
  }
  return out;
}

}  // namespace localno
