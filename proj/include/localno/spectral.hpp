#pragma once

// Truncated-Fourier global convolution.
//
// Retained frequencies: along every axis but the last, `modes[k]` signed
// frequencies 0 .. ceil(m/2)-1 and -floor(m/2) .. -1; along the last axis
// the non-negative frequencies 0 .. m-1 (the half spectrum of a real
// signal). Forward transform unnormalized, synthesis divides by the point
// count. The real output is
//   y(p) = (1/N) sum_k c_k Re(Y_k e^{+i k.p}),  c_k = 1 for last-axis
// frequency 0 or Nyquist, 2 otherwise,
// which equals the inverse real FFT of the zero-filled half spectrum.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "localno/error.hpp"
#include "localno/field.hpp"
#include "localno/rng.hpp"

namespace localno {

using cdouble = std::complex<double>;

struct SpectralWeights {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::vector<std::size_t> modes;  ///< stored bins per axis
  std::vector<cdouble> w;          ///< (out, in, bins) with bins row-major over axes

  SpectralWeights() = default;
  SpectralWeights(std::size_t co, std::size_t ci, std::vector<std::size_t> m)
      : out_channels(co), in_channels(ci), modes(std::move(m)) {
    require(!modes.empty() && modes.size() <= 2, ErrorKind::InvalidArgument, "spectral layers support 1D and 2D");
    for (auto x : modes) require(x >= 1, ErrorKind::InvalidArgument, "mode counts must be >= 1");
    w.assign(co * ci * bins(), cdouble(0.0, 0.0));
  }

  std::size_t bins() const {
    std::size_t n = 1;
    for (auto m : modes) n *= m;
    return n;
  }
  cdouble& operator()(std::size_t co, std::size_t ci, std::size_t k) { return w[(co * in_channels + ci) * bins() + k]; }
  cdouble operator()(std::size_t co, std::size_t ci, std::size_t k) const {
    return w[(co * in_channels + ci) * bins() + k];
  }

  /// Stored bins for a "modes M" configuration: M signed frequencies on the
  /// leading axes, M/2 on the last.
  static std::vector<std::size_t> bins_for(std::size_t dim, std::size_t modes_per_dim) {
    std::vector<std::size_t> m(dim, modes_per_dim);
    m.back() = std::max<std::size_t>(1, modes_per_dim / 2);
    return m;
  }

  /// Identity on every retained bin (w[co, ci, k] = delta_{co ci}).
  static SpectralWeights identity(std::size_t channels, std::vector<std::size_t> m) {
    SpectralWeights s(channels, channels, std::move(m));
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t k = 0; k < s.bins(); ++k) s(c, c, k) = 1.0;
    return s;
  }

  /// Independent real and imaginary parts, zero mean, E|w|^2 = 1/(in*out).
  void randomize(Rng& rng) {
    const double sd = std::sqrt(0.5 / static_cast<double>(in_channels * out_channels));
    for (auto& z : w) {
      const double re = rng.normal(0.0, sd);
      const double im = rng.normal(0.0, sd);
      z = cdouble(re, im);
    }
  }
};

/// Signed frequency of stored bin b along an axis.
inline long bin_frequency(std::size_t b, std::size_t stored, bool last_axis) {
  if (last_axis) return static_cast<long>(b);
  const std::size_t pos = (stored + 1) / 2;
  return b < pos ? static_cast<long>(b) : static_cast<long>(b) - static_cast<long>(stored);
}

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Twiddle tables for one grid shape and mode set. E_k(p) = cos - i sin is
/// split as C + i S with S = -sin.
struct SpectralPlan {
  long n0 = 1, n1 = 1, m0 = 1, m1 = 1;
  RowMatrix C0, S0, C1, S1;  // (m, n)
  Eigen::VectorXd coef;      // (m1) synthesis multiplicity / N

  SpectralPlan(std::span<const std::size_t> shape, std::span<const std::size_t> modes) {
    const bool two_d = shape.size() == 2;
    n0 = two_d ? static_cast<long>(shape[0]) : 1;
    n1 = static_cast<long>(shape.back());
    m0 = two_d ? static_cast<long>(modes[0]) : 1;
    m1 = static_cast<long>(modes.back());
    auto table = [](long m, long n, bool last, RowMatrix& C, RowMatrix& S) {
      C.resize(m, n);
      S.resize(m, n);
      for (long b = 0; b < m; ++b) {
        const long f = bin_frequency(static_cast<std::size_t>(b), static_cast<std::size_t>(m), last);
        for (long p = 0; p < n; ++p) {
          // reduce f*p mod n first so large grids keep full accuracy
          const long r = ((f * p) % n + n) % n;
          const double ang = 2.0 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(n);
          C(b, p) = std::cos(ang);
          S(b, p) = -std::sin(ang);
        }
      }
    };
    table(m0, n0, false, C0, S0);
    table(m1, n1, true, C1, S1);
    coef.resize(m1);
    const double inv_n = 1.0 / static_cast<double>(n0 * n1);
    for (long b = 0; b < m1; ++b) coef(b) = (b == 0 || 2 * b == n1) ? inv_n : 2.0 * inv_n;
  }

  std::size_t points() const { return static_cast<std::size_t>(n0 * n1); }
  std::size_t bins() const { return static_cast<std::size_t>(m0 * m1); }

  /// Retained forward transform of `channels` stacked fields.
  /// Output (re, im), each (channels * m0, m1).
  void analyze(const double* x, std::size_t channels, RowMatrix& re, RowMatrix& im) const {
    const auto C = static_cast<long>(channels);
    Eigen::Map<const RowMatrix> X(x, C * n0, n1);
    const RowMatrix Ar = X * C1.transpose();
    const RowMatrix Ai = X * S1.transpose();
    re.resize(C * m0, m1);
    im.resize(C * m0, m1);
    for (long c = 0; c < C; ++c) {
      const auto ar = Ar.middleRows(c * n0, n0);
      const auto ai = Ai.middleRows(c * n0, n0);
      re.middleRows(c * m0, m0).noalias() = C0 * ar - S0 * ai;
      im.middleRows(c * m0, m0).noalias() = C0 * ai + S0 * ar;
    }
  }

  /// y = (1/N) sum_k c_k Re(Y_k conj(E_k(p))) for `channels` spectra.
  void synthesize(const RowMatrix& re, const RowMatrix& im, std::size_t channels, double* y) const {
    const auto C = static_cast<long>(channels);
    RowMatrix Ur(C * n0, m1), Ui(C * n0, m1);
    for (long c = 0; c < C; ++c) {
      const auto yr = re.middleRows(c * m0, m0);
      const auto yi = im.middleRows(c * m0, m0);
      Ur.middleRows(c * n0, n0).noalias() = C0.transpose() * yr + S0.transpose() * yi;
      Ui.middleRows(c * n0, n0).noalias() = C0.transpose() * yi - S0.transpose() * yr;
    }
    Ur *= coef.asDiagonal();
    Ui *= coef.asDiagonal();
    Eigen::Map<RowMatrix> Y(y, C * n0, n1);
    Y.noalias() = Ur * C1 + Ui * S1;
  }

  /// Adjoint synthesis for the input gradient: x(p) = Re sum_k H_k E_k(p).
  void synthesize_adjoint(const RowMatrix& re, const RowMatrix& im, std::size_t channels, double* x) const {
    const auto C = static_cast<long>(channels);
    RowMatrix Vr(C * n0, m1), Vi(C * n0, m1);
    for (long c = 0; c < C; ++c) {
      const auto hr = re.middleRows(c * m0, m0);
      const auto hi = im.middleRows(c * m0, m0);
      Vr.middleRows(c * n0, n0).noalias() = C0.transpose() * hr - S0.transpose() * hi;
      Vi.middleRows(c * n0, n0).noalias() = C0.transpose() * hi + S0.transpose() * hr;
    }
    Eigen::Map<RowMatrix> X(x, C * n0, n1);
    X.noalias() = Vr * C1 - Vi * S1;
  }
};

inline std::shared_ptr<const SpectralPlan> spectral_plan(std::span<const std::size_t> shape,
                                                        std::span<const std::size_t> modes) {
  static std::mutex mutex;
  static std::map<std::vector<std::size_t>, std::shared_ptr<const SpectralPlan>> cache;
  std::vector<std::size_t> key(shape.begin(), shape.end());
  key.push_back(0);
  key.insert(key.end(), modes.begin(), modes.end());
  std::lock_guard lock(mutex);
  auto& slot = cache[key];
  if (!slot) slot = std::make_shared<const SpectralPlan>(shape, modes);
  return slot;
}

inline void check_spectral(const SpectralWeights& w, std::span<const std::size_t> shape, const Field& input) {
  require(shape.size() == w.modes.size(), ErrorKind::InvalidArgument, "mode rank does not match grid rank");
  for (std::size_t k = 0; k < shape.size(); ++k) {
    const bool last = k + 1 == shape.size();
    const std::size_t bound = last ? shape[k] / 2 + 1 : shape[k];
    require(w.modes[k] <= bound, ErrorKind::InvalidArgument,
            "axis " + std::to_string(k) + " retains " + std::to_string(w.modes[k]) + " modes but the grid allows " +
                std::to_string(bound));
  }
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  require_shape(input, w.in_channels, n, "spectral input");
  require(w.w.size() == w.out_channels * w.in_channels * w.bins(), ErrorKind::InvalidArgument,
          "spectral weights have the wrong size");
}

}  // namespace detail

inline Field spectral_conv_forward(const SpectralWeights& w, std::span<const std::size_t> shape, const Field& input) {
  detail::check_spectral(w, shape, input);
  const auto plan = detail::spectral_plan(shape, w.modes);
  const long m0 = plan->m0, m1 = plan->m1;
  const std::size_t K = plan->bins();
  Field out(input.batch(), w.out_channels, plan->points());
  detail::RowMatrix xr, xi;
  detail::RowMatrix yr(static_cast<long>(w.out_channels) * m0, m1), yi(static_cast<long>(w.out_channels) * m0, m1);
  for (std::size_t b = 0; b < input.batch(); ++b) {
    plan->analyze(input.sample(b).data(), w.in_channels, xr, xi);
    yr.setZero();
    yi.setZero();
    // bin k of channel c sits at row c*m0 + k/m1, column k%m1
    for (std::size_t co = 0; co < w.out_channels; ++co)
      for (std::size_t ci = 0; ci < w.in_channels; ++ci) {
        const cdouble* wk = w.w.data() + (co * w.in_channels + ci) * K;
        for (long r = 0; r < m0; ++r)
          for (long c = 0; c < m1; ++c) {
            const cdouble z = wk[r * m1 + c];
            const double a = xr(static_cast<long>(ci) * m0 + r, c), bb = xi(static_cast<long>(ci) * m0 + r, c);
            yr(static_cast<long>(co) * m0 + r, c) += z.real() * a - z.imag() * bb;
            yi(static_cast<long>(co) * m0 + r, c) += z.real() * bb + z.imag() * a;
          }
      }
    plan->synthesize(yr, yi, w.out_channels, out.sample(b).data());
  }
  return out;
}

struct SpectralGrads {
  SpectralWeights weights;  ///< d/dRe + i d/dIm
  Field input;
};

inline SpectralGrads spectral_conv_vjp(const SpectralWeights& w, std::span<const std::size_t> shape,
                                       const Field& input, const Field& upstream) {
  detail::check_spectral(w, shape, input);
  const auto plan = detail::spectral_plan(shape, w.modes);
  require(upstream.batch() == input.batch(), ErrorKind::InvalidArgument, "upstream batch mismatch");
  require_shape(upstream, w.out_channels, plan->points(), "spectral upstream");
  const long m0 = plan->m0, m1 = plan->m1;
  const std::size_t K = plan->bins();
  SpectralGrads g{SpectralWeights(w.out_channels, w.in_channels, w.modes),
                  Field(input.batch(), w.in_channels, plan->points())};
  detail::RowMatrix xr, xi, gr, gi;
  detail::RowMatrix hr(static_cast<long>(w.in_channels) * m0, m1), hi(static_cast<long>(w.in_channels) * m0, m1);
  for (std::size_t b = 0; b < input.batch(); ++b) {
    plan->analyze(input.sample(b).data(), w.in_channels, xr, xi);
    // G_k = (c_k / N) conj(ghat_k)
    plan->analyze(upstream.sample(b).data(), w.out_channels, gr, gi);
    for (long c = 0; c < m1; ++c) {
      gr.col(c) *= plan->coef(c);
      gi.col(c) *= -plan->coef(c);
    }
    hr.setZero();
    hi.setZero();
    for (std::size_t co = 0; co < w.out_channels; ++co)
      for (std::size_t ci = 0; ci < w.in_channels; ++ci) {
        const cdouble* wk = w.w.data() + (co * w.in_channels + ci) * K;
        cdouble* gk = g.weights.w.data() + (co * w.in_channels + ci) * K;
        for (long r = 0; r < m0; ++r)
          for (long c = 0; c < m1; ++c) {
            const cdouble G(gr(static_cast<long>(co) * m0 + r, c), gi(static_cast<long>(co) * m0 + r, c));
            const cdouble X(xr(static_cast<long>(ci) * m0 + r, c), xi(static_cast<long>(ci) * m0 + r, c));
            gk[r * m1 + c] += std::conj(G * X);
            const cdouble H = G * wk[r * m1 + c];
            hr(static_cast<long>(ci) * m0 + r, c) += H.real();
            hi(static_cast<long>(ci) * m0 + r, c) += H.imag();
          }
      }
    plan->synthesize_adjoint(hr, hi, w.in_channels, g.input.sample(b).data());
  }
  return g;
}

}  // namespace localno
