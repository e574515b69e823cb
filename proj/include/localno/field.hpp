#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "localno/error.hpp"

namespace localno {

/// Cache-line aligned storage. Eigen picks its vectorized loop split from
/// the runtime address of mapped data, so the rounding of a product depends
/// on alignment; a fixed alignment keeps repeated runs bitwise identical.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

/// Multi-channel samples of a real function on a grid, stored batch-major,
/// then channel, then point (row-major over the grid shape).
class Field {
 public:
  Field() = default;
  Field(std::size_t batch, std::size_t channels, std::size_t points, double fill = 0.0)
      : batch_(batch), channels_(channels), points_(points), data_(batch * channels * points, fill) {}

  std::size_t batch() const noexcept { return batch_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t points() const noexcept { return points_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t b, std::size_t c, std::size_t p) {
    return data_[(b * channels_ + c) * points_ + p];
  }
  double operator()(std::size_t b, std::size_t c, std::size_t p) const {
    return data_[(b * channels_ + c) * points_ + p];
  }

  std::span<double> channel(std::size_t b, std::size_t c) {
    return {data_.data() + (b * channels_ + c) * points_, points_};
  }
  std::span<const double> channel(std::size_t b, std::size_t c) const {
    return {data_.data() + (b * channels_ + c) * points_, points_};
  }
  /// All channels of one batch element, contiguous.
  std::span<double> sample(std::size_t b) {
    return {data_.data() + b * channels_ * points_, channels_ * points_};
  }
  std::span<const double> sample(std::size_t b) const {
    return {data_.data() + b * channels_ * points_, channels_ * points_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool same_shape(const Field& other) const noexcept {
    return batch_ == other.batch_ && channels_ == other.channels_ && points_ == other.points_;
  }

  bool operator==(const Field&) const = default;

 private:
  std::size_t batch_ = 0;
  std::size_t channels_ = 0;
  std::size_t points_ = 0;
  std::vector<double, AlignedAllocator<double>> data_;
};

inline void require_shape(const Field& f, std::size_t channels, std::size_t points, const std::string& what) {
  require(f.channels() == channels && f.points() == points, ErrorKind::InvalidArgument,
          what + ": expected " + std::to_string(channels) + " channels x " + std::to_string(points) +
              " points, got " + std::to_string(f.channels()) + " x " + std::to_string(f.points()));
}

}  // namespace localno
