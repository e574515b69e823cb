#pragma once

// Property suites with numeric pass/fail assertions. Each suite fills a
// table of measured quantities (written as CSV) and a list of checks.
// Tables hold only deterministic numbers, never timings, so two runs with
// the same seed give byte-identical files.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "localno/data.hpp"
#include "localno/differential.hpp"
#include "localno/disco.hpp"
#include "localno/model.hpp"
#include "localno/neighbors.hpp"
#include "localno/spectral.hpp"
#include "localno/train.hpp"

namespace localno {

struct VerifyCheck {
  std::string name;
  double value = 0.0;
  std::string bound;  ///< human-readable acceptance range
  bool passed = false;
};

struct SuiteReport {
  std::string suite;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::vector<VerifyCheck> checks;

  bool passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return !checks.empty();
  }

  std::string csv() const {
    std::string out;
    for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + columns[i];
    out += '\n';
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + r[i];
      out += '\n';
    }
    return out;
  }

  void check_le(const std::string& name, double value, double limit) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "<= %g", limit);
    checks.push_back({name, value, buf, value <= limit});
  }
  void check_in(const std::string& name, double value, double lo, double hi) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "in [%g, %g]", lo, hi);
    checks.push_back({name, value, buf, value >= lo && value <= hi});
  }
  void check_lt(const std::string& name, double value, double limit) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "< %.6g", limit);
    checks.push_back({name, value, buf, value < limit});
  }
};

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt(std::size_t v) { return std::to_string(v); }

/// "PASS name: value bound" / "FAIL ..." lines.
inline std::string check_lines(const SuiteReport& r) {
  std::string out;
  char buf[512];
  for (const auto& c : r.checks) {
    std::snprintf(buf, sizeof buf, "%s %s/%s: %.6g %s\n", c.passed ? "PASS" : "FAIL", r.suite.c_str(), c.name.c_str(),
                  c.value, c.bound.c_str());
    out += buf;
  }
  return out;
}

struct VerifyOptions {
  std::uint64_t seed = 2024;
  /// Finest grid of the convergence suites; the acceptance setting is 4096.
  std::size_t max_resolution = 4096;
};

namespace detail {

inline std::vector<std::size_t> doubling(std::size_t from, std::size_t to) {
  std::vector<std::size_t> r;
  for (std::size_t n = from; n <= to; n *= 2) r.push_back(n);
  return r;
}

inline std::string pair_name(std::size_t a, std::size_t b) { return std::to_string(a) + "/" + std::to_string(b); }

/// sqrt(sum q (a-b)^2) over points at least one row/column from the edge.
inline double interior_l2(const Grid& g, std::span<const double> a, std::span<const double> b) {
  const std::size_t n0 = g.shape()[0], n1 = g.shape()[1];
  double s = 0.0;
  for (std::size_t r = 1; r + 1 < n0; ++r)
    for (std::size_t c = 1; c + 1 < n1; ++c) {
      const std::size_t p = r * n1 + c;
      const double d = a[p] - b[p];
      s += g.weight(p) * d * d;
    }
  return std::sqrt(s);
}

/// Gradient check of J(theta, x) = <u, f(theta, x)> in both arguments.
inline void check_layer(SuiteReport& rep, const std::string& name, double tol,
                        const std::function<double(std::span<const double>, std::span<const double>)>& objective,
                        const std::vector<double>& params, const std::vector<double>& x,
                        std::span<const double> g_params, std::span<const double> g_x) {
  const auto rp = grad_check(
      name + " params", [&](std::span<const double> p) { return objective(p, x); }, params, g_params, tol);
  const auto rx = grad_check(
      name + " input", [&](std::span<const double> v) { return objective(params, v); }, x, g_x, tol);
  for (const auto* r : {&rp, &rx}) {
    rep.rows.push_back({r->name, fmt(r->checked), fmt(r->max_rel_error)});
    rep.check_le(r->name, r->max_rel_error, tol);
  }
}

inline std::vector<double> to_vector(std::span<const double> s) { return {s.begin(), s.end()}; }

inline Field with_values(const Field& shape, std::span<const double> v) {
  Field f = shape;
  std::copy(v.begin(), v.end(), f.values().begin());
  return f;
}

inline std::vector<double> interleave(const std::vector<cdouble>& w) {
  std::vector<double> out;
  out.reserve(2 * w.size());
  for (const auto& z : w) {
    out.push_back(z.real());
    out.push_back(z.imag());
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convergence of the differential layer to a first-order operator

/// A random 3x3 kernel with 10 input channels applied to the sampled
/// parabola at every scale and resolution; error against the exact
/// directional derivative on interior points.
inline SuiteReport verify_diff_convergence(const VerifyOptions& opt = {}) {
  SuiteReport rep{"diff-convergence", {"scale", "resolution", "l2_error"}, {}, {}};
  const std::vector<double> scales{1.0, 2.0, 4.0, 16.0};
  const auto res = detail::doubling(32, opt.max_resolution);
  require(res.size() >= 4, ErrorKind::InvalidArgument, "diff-convergence needs at least 4 resolutions");
  const std::size_t channels = 10;
  DifferentialKernel k(1, channels, 3, 2, Padding::Reflective);
  Rng rng(opt.seed);
  for (auto& t : k.taps) t = rng.normal();
  std::vector<std::vector<double>> err(scales.size());
  for (std::size_t si = 0; si < scales.size(); ++si) {
    const auto spec = ParabolaSpec::uniform(channels, scales[si], opt.seed + 1);
    for (std::size_t n : res) {
      const auto g = make_unit_square(n);
      double e = 0.0;
      {
        const auto task = gen_parabola(g, spec);
        const Field y = diff_conv_forward(k, g, task.input);
        const Field truth = task.target(extract_direction(k, g.spacing()));
        e = detail::interior_l2(g, y.values(), truth.values());
      }
      err[si].push_back(e);
      rep.rows.push_back({fmt(scales[si]), fmt(n), fmt(e)});
    }
  }
  for (std::size_t si = 0; si < scales.size(); ++si) {
    const std::string s = "scale " + fmt(scales[si]);
    for (std::size_t i = 0; i + 1 < res.size(); ++i)
      rep.check_lt(s + " decreases " + detail::pair_name(res[i], res[i + 1]), err[si][i + 1], err[si][i]);
    for (std::size_t i = res.size() - 4; i + 1 < res.size(); ++i)
      rep.check_in(s + " ratio " + detail::pair_name(res[i], res[i + 1]), err[si][i] / err[si][i + 1], 1.8, 2.2);
  }
  for (std::size_t si = 1; si < scales.size(); ++si)
    for (std::size_t i = 0; i < res.size(); ++i)
      rep.check_in("scale " + fmt(scales[si]) + " vs 1 at " + fmt(res[i]), err[si][i] / (scales[si] * err[0][i]), 0.8,
                   1.2);
  return rep;
}

// ---------------------------------------------------------------------------
// Collapse of an unconstrained kernel to a pointwise operator

/// Plain (uncentred, unscaled) cross-correlation of a smooth field; the
/// max-norm distance to Kbar v, Kbar the per-slice tap sum, is O(h).
inline SuiteReport verify_collapse(const VerifyOptions& opt = {}) {
  SuiteReport rep{"collapse", {"resolution", "max_distance"}, {}, {}};
  const std::size_t co = 2, ci = 2, S = 3, T = S * S;
  std::vector<double> taps(co * ci * T);
  Rng rng(opt.seed + 10);
  for (auto& t : taps) t = rng.normal();
  std::vector<double> kbar(co * ci, 0.0);
  for (std::size_t s = 0; s < co * ci; ++s)
    for (std::size_t t = 0; t < T; ++t) kbar[s] += taps[s * T + t];
  const auto res = detail::doubling(32, std::min<std::size_t>(opt.max_resolution, 2048));
  std::vector<double> dist;
  for (std::size_t n : res) {
    const auto g = make_unit_square(n);
    Field v(1, ci, g.size());
    for (std::size_t p = 0; p < g.size(); ++p) {
      const double x = g.coord(p, 0), y = g.coord(p, 1);
      v(0, 0, p) = std::sin(2.0 * x + 0.5) * std::cos(3.0 * y);
      v(0, 1, p) = std::exp(0.5 * x) * (1.0 + y * y);
    }
    const Field out = cross_correlate(taps, co, ci, S, Padding::Reflective, g.shape(), v);
    double d = 0.0;
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t p = 0; p < g.size(); ++p) {
        double target = 0.0;
        for (std::size_t i = 0; i < ci; ++i) target += kbar[o * ci + i] * v(0, i, p);
        d = std::max(d, std::abs(out(0, o, p) - target));
      }
    dist.push_back(d);
    rep.rows.push_back({fmt(n), fmt(d)});
  }
  for (std::size_t i = 0; i + 1 < res.size(); ++i)
    rep.check_in("halving " + detail::pair_name(res[i], res[i + 1]), dist[i] / dist[i + 1], 1.7, 2.3);
  return rep;
}

// ---------------------------------------------------------------------------
// DISCO versus standard convolution on a periodic line

inline SuiteReport verify_disco_equivalence(const VerifyOptions& opt = {}) {
  SuiteReport rep{"disco-equivalence", {"m", "basis", "shift_matrix_mismatch", "max_abs_vs_dense"}, {}, {}};
  for (std::size_t m : {4u, 8u, 16u}) {
    const auto g = make_regular_grid({m}, {1.0}, true);
    const double h = 1.0 / static_cast<double>(m);
    const std::size_t L = m - 1;
    const auto basis = HatBasis1D::equidistant(L, h);
    const auto k = assemble_planar(g, g, basis);
    // K^(l) must be the 0/1 matrix of the shift by l
    double mismatch = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      const auto K = k.dense(l);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
          mismatch = std::max(mismatch, std::abs(K(static_cast<long>(i), static_cast<long>(j)) -
                                                 (j == (i + l) % m ? 1.0 : 0.0)));
    }
    const std::size_t co = 2, ci = 3;
    DiscoParams p(co, ci, L);
    Rng rng(opt.seed + 20 + m);
    for (auto& t : p.theta) t = rng.normal();
    Field x(2, ci, m);
    for (auto& v : x.values()) v = rng.normal();
    const Field y = disco_forward(k, p, x);
    // dense oracle: y(i) = sum_t q kappa(z_t) x(i + t), offsets wrapped into [-h, (m-1)h)
    double diff = 0.0;
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t o = 0; o < co; ++o)
        for (std::size_t i = 0; i < m; ++i) {
          double s = 0.0;
          for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t t = 0; t < m; ++t) {
              const double z = (t == m - 1 ? -1.0 : static_cast<double>(t)) * h;
              const auto phi = basis.eval(z);
              double kappa = 0.0;
              for (std::size_t l = 0; l < L; ++l) kappa += p(o, c, l) * phi[l];
              s += g.weight((i + t) % m) * kappa * x(b, c, (i + t) % m);
            }
          diff = std::max(diff, std::abs(y(b, o, i) - s));
        }
    rep.rows.push_back({fmt(m), fmt(L), fmt(mismatch), fmt(diff)});
    rep.check_le("m=" + fmt(m) + " shift matrices", mismatch, 0.0);
    rep.check_le("m=" + fmt(m) + " sparse vs dense", diff, 1e-12);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Equivariance

inline SuiteReport verify_equivariance(const VerifyOptions& opt = {}) {
  SuiteReport rep{"equivariance", {"layer", "actions", "max_abs_commutator"}, {}, {}};
  const auto torus = make_regular_grid({16, 16}, {1.0, 1.0}, true);
  Rng rng(opt.seed + 30);
  Field x(1, 2, torus.size());
  for (auto& v : x.values()) v = rng.normal();

  auto all_translations = [&](const std::function<Field(const Field&)>& f) {
    const Field y = f(x);
    double worst = 0.0;
    for (long a = 0; a < 16; ++a)
      for (long b = 0; b < 16; ++b) {
        const Field lhs = f(translate_field(torus, x, {a, b}));
        const Field rhs = translate_field(torus, y, {a, b});
        for (std::size_t i = 0; i < lhs.size(); ++i)
          worst = std::max(worst, std::abs(lhs.values()[i] - rhs.values()[i]));
      }
    return worst;
  };

  {
    const auto k = assemble_planar(torus, torus, default_torus_basis());
    DiscoParams p(2, 2, k.basis);
    for (auto& t : p.theta) t = rng.normal();
    const double e = all_translations([&](const Field& v) { return disco_forward(k, p, v); });
    rep.rows.push_back({"disco-torus", "256", fmt(e)});
    rep.check_le("torus DISCO translations", e, 1e-12);
  }
  {
    SpectralWeights w(2, 2, SpectralWeights::bins_for(2, 8));
    w.randomize(rng);
    const double e = all_translations([&](const Field& v) { return spectral_conv_forward(w, torus.shape(), v); });
    rep.rows.push_back({"spectral-torus", "256", fmt(e)});
    rep.check_le("spectral translations", e, 1e-10);
  }
  {
    const auto sphere = make_equiangular_sphere_grid(16, 32);
    const auto k = assemble_spherical(sphere, sphere, default_sphere_basis());
    DiscoParams p(2, 2, k.basis);
    for (auto& t : p.theta) t = rng.normal();
    Field xs(1, 2, sphere.size());
    for (auto& v : xs.values()) v = rng.normal();
    const Field lhs = disco_forward(k, p, rotate_longitude(sphere, xs, 1));
    const Field rhs = rotate_longitude(sphere, disco_forward(k, p, xs), 1);
    double e = 0.0;
    for (std::size_t i = 0; i < lhs.size(); ++i) e = std::max(e, std::abs(lhs.values()[i] - rhs.values()[i]));
    rep.rows.push_back({"disco-sphere", "1", fmt(e)});
    rep.check_le("sphere DISCO longitude rotation", e, 1e-12);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Gradient checks of every layer and a full model

inline SuiteReport verify_gradcheck(const VerifyOptions& opt = {}, double tol = 1e-5) {
  SuiteReport rep{"gradcheck", {"check", "coordinates", "max_rel_error"}, {}, {}};
  Rng rng(opt.seed + 40);
  auto randomize = [&](std::span<double> v) {
    for (auto& x : v) x = rng.normal();
  };
  auto random_field = [&](std::size_t b, std::size_t c, std::size_t n) {
    Field f(b, c, n);
    randomize(f.values());
    return f;
  };
  auto dot = [](const Field& u, const Field& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u.values()[i] * y.values()[i];
    return s;
  };

  {  // differential
    const auto g = make_regular_grid({6, 7}, {1.0, 1.2}, false);
    DifferentialKernel k(2, 3, 3, 2, Padding::Reflective);
    randomize(k.taps);
    const Field x = random_field(2, 3, g.size()), u = random_field(2, 2, g.size());
    const auto gr = diff_conv_vjp(k, g, x, u);
    detail::check_layer(
        rep, "differential", tol,
        [&](std::span<const double> p, std::span<const double> v) {
          auto kk = k;
          std::copy(p.begin(), p.end(), kk.taps.begin());
          return dot(u, diff_conv_forward(kk, g, detail::with_values(x, v)));
        },
        k.taps, detail::to_vector(x.values()), gr.taps, gr.input.values());
  }
  auto disco_case = [&](const std::string& name, const Grid& g, const AssembledKernel& k) {
    DiscoParams p(2, 2, k.basis);
    randomize(p.theta);
    const Field x = random_field(2, 2, g.size()), u = random_field(2, 2, g.size());
    const auto gr = disco_vjp(k, p, x, u);
    detail::check_layer(
        rep, name, tol,
        [&](std::span<const double> th, std::span<const double> v) {
          auto q = p;
          std::copy(th.begin(), th.end(), q.theta.begin());
          return dot(u, disco_forward(k, q, detail::with_values(x, v)));
        },
        p.theta, detail::to_vector(x.values()), gr.params.theta, gr.input.values());
  };
  {
    const auto g = make_unit_square(8);
    disco_case("disco-planar", g, assemble_planar(g, g, RadialAnisotropicBasis(0.3, 1, 4)));
  }
  {
    const auto g = make_equiangular_sphere_grid(6, 12);
    disco_case("disco-sphere", g, assemble_spherical(g, g, RadialAnisotropicBasis(0.6, 1, 4)));
  }
  {  // spectral
    const auto g = make_regular_grid({8, 8}, {1.0, 1.0}, true);
    SpectralWeights w(2, 3, SpectralWeights::bins_for(2, 4));
    w.randomize(rng);
    const Field x = random_field(2, 3, g.size()), u = random_field(2, 2, g.size());
    const auto gr = spectral_conv_vjp(w, g.shape(), x, u);
    detail::check_layer(
        rep, "spectral", tol,
        [&](std::span<const double> p, std::span<const double> v) {
          auto ww = w;
          for (std::size_t i = 0; i < ww.w.size(); ++i) ww.w[i] = cdouble(p[2 * i], p[2 * i + 1]);
          return dot(u, spectral_conv_forward(ww, g.shape(), detail::with_values(x, v)));
        },
        detail::interleave(w.w), detail::to_vector(x.values()), detail::interleave(gr.weights.w), gr.input.values());
  }
  {  // pointwise
    Linear L(3, 4);
    randomize(L.w);
    randomize(L.b);
    const Field x = random_field(2, 3, 10), u = random_field(2, 4, 10);
    Linear gL(3, 4);
    const Field gx = detail::linear_vjp(L, x, u, gL);
    std::vector<double> params = L.w, gparams = gL.w;
    params.insert(params.end(), L.b.begin(), L.b.end());
    gparams.insert(gparams.end(), gL.b.begin(), gL.b.end());
    detail::check_layer(
        rep, "pointwise", tol,
        [&](std::span<const double> p, std::span<const double> v) {
          auto M = L;
          std::copy(p.begin(), p.begin() + static_cast<long>(M.w.size()), M.w.begin());
          std::copy(p.begin() + static_cast<long>(M.w.size()), p.end(), M.b.begin());
          return dot(u, detail::linear_forward(M, detail::with_values(x, v)));
        },
        params, detail::to_vector(x.values()), gparams, gx.values());
  }
  {  // full two-block model with every branch
    const auto g = make_unit_square(8);
    BlockConfig b;
    b.differential = b.local_integral = true;
    b.modes = 4;
    b.basis = RadialAnisotropicBasis(0.3, 1, 4);
    auto cfg = ModelConfig::uniform(2, 1, 4, 2, b);
    cfg.input_scale = 0.8;
    cfg.output_scale = 1.7;
    const auto m = init_model(cfg, opt.seed + 41);
    const auto ctx = prepare_context(m, g);
    const Field x = random_field(2, 2, g.size()), u = random_field(2, 1, g.size());
    ModelTape tape;
    model_forward(m, ctx, x, &tape);
    const auto gr = model_vjp(m, ctx, tape, u);
    detail::check_layer(
        rep, "model", tol,
        [&](std::span<const double> p, std::span<const double> v) {
          auto mm = m;
          unflatten_params(mm, p);
          return dot(u, model_forward(mm, ctx, detail::with_values(x, v)));
        },
        flatten_params(m), detail::to_vector(x.values()), flatten_params(gr.params), gr.input.values());
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Stencils on scattered points

inline SuiteReport verify_irregular_stencils(const VerifyOptions& opt = {}) {
  SuiteReport rep{"irregular-stencils", {"quantity", "value"}, {}, {}};
  Rng rng(opt.seed + 50);
  double worst_constraint = 0.0, worst_affine = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::vector<double> y = {rng.uniform(), rng.uniform()};
    const std::size_t m = 3 + rng.index(10);
    std::vector<double> nb(2 * m);
    const double radius = rng.uniform(0.005, 0.1);
    for (std::size_t j = 0; j < m; ++j) {
      nb[2 * j] = y[0] + rng.uniform(-radius, radius);
      nb[2 * j + 1] = y[1] + rng.uniform(-radius, radius);
    }
    const double c = rng.normal();
    const std::vector<double> b = {rng.normal(), rng.normal()};
    const auto w = solve_irregular_stencil(y, nb, c, b);
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      s0 += w[j];
      s1 += w[j] * (nb[2 * j] - y[0]);
      s2 += w[j] * (nb[2 * j + 1] - y[1]);
    }
    worst_constraint = std::max({worst_constraint, std::abs(s0 - c), std::abs(s1 - b[0]), std::abs(s2 - b[1])});
    // an affine input v = alpha + beta.x is mapped to c v(y) + beta.b
    const double alpha = rng.normal(), beta0 = rng.normal(), beta1 = rng.normal();
    double applied = 0.0;
    for (std::size_t j = 0; j < m; ++j) applied += w[j] * (alpha + beta0 * nb[2 * j] + beta1 * nb[2 * j + 1]);
    const double expect = c * (alpha + beta0 * y[0] + beta1 * y[1]) + beta0 * b[0] + beta1 * b[1];
    worst_affine = std::max(worst_affine, std::abs(applied - expect) / (1.0 + std::abs(expect)));
  }
  rep.rows.push_back({"max_constraint_residual", fmt(worst_constraint)});
  rep.rows.push_back({"max_affine_error", fmt(worst_affine)});
  rep.check_le("constraint residuals", worst_constraint, 1e-10);
  rep.check_le("affine reproduction", worst_affine, 1e-10);

  // first-order convergence on jittered point clouds, one refinement
  auto rms_error = [&](std::size_t n, std::uint64_t seed) {
    Rng jitter(seed);
    const double h = 1.0 / static_cast<double>(n);
    std::vector<double> pts, wts;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) {
        pts.push_back((static_cast<double>(i) + 0.5 + jitter.uniform(-0.3, 0.3)) * h);
        pts.push_back((static_cast<double>(k) + 0.5 + jitter.uniform(-0.3, 0.3)) * h);
        wts.push_back(h * h);
      }
    const auto g = make_unstructured_grid(2, pts, wts);
    DirectionalSignature sig(1, 1, 2);
    sig.b = {0.8, -0.6};
    Field x(1, 1, g.size());
    for (std::size_t j = 0; j < g.size(); ++j) x(0, 0, j) = std::sin(2 * g.coord(j, 0)) * std::cos(3 * g.coord(j, 1));
    const auto out = irregular_diff_forward(g, ball_neighborhoods(g, 1.6 * h), sig, x);
    double s = 0.0;
    std::size_t count = 0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double a = g.coord(j, 0), b = g.coord(j, 1);
      if (a < 0.1 || a > 0.9 || b < 0.1 || b > 0.9) continue;
      const double truth = 0.8 * 2 * std::cos(2 * a) * std::cos(3 * b) + 0.6 * 3 * std::sin(2 * a) * std::sin(3 * b);
      s += std::pow(out(0, 0, j) - truth, 2);
      ++count;
    }
    return std::sqrt(s / static_cast<double>(count));
  };
  const double e1 = rms_error(40, opt.seed + 51), e2 = rms_error(80, opt.seed + 52);
  rep.rows.push_back({"rms_error_40", fmt(e1)});
  rep.rows.push_back({"rms_error_80", fmt(e2)});
  rep.check_in("smooth input order ratio 40/80", e1 / e2, 1.7, 2.3);
  return rep;
}

// ---------------------------------------------------------------------------

inline const std::vector<std::string>& verify_suite_names() {
  static const std::vector<std::string> names{"diff-convergence", "collapse",  "disco-equivalence",
                                              "equivariance",     "gradcheck", "irregular-stencils"};
  return names;
}

inline SuiteReport run_verify_suite(const std::string& name, const VerifyOptions& opt = {}) {
  if (name == "diff-convergence") return verify_diff_convergence(opt);
  if (name == "collapse") return verify_collapse(opt);
  if (name == "disco-equivalence") return verify_disco_equivalence(opt);
  if (name == "equivariance") return verify_equivariance(opt);
  if (name == "gradcheck") return verify_gradcheck(opt);
  if (name == "irregular-stencils") return verify_irregular_stencils(opt);
  throw Error(ErrorKind::InvalidArgument, "unknown verify suite '" + name + "'");
}

/// Writes verify_<suite>.csv under `dir`.
inline std::string write_suite_csv(const SuiteReport& r, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto path = (std::filesystem::path(dir) / ("verify_" + r.suite + ".csv")).string();
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorKind::Io, "cannot write " + path);
  os << r.csv();
  require(static_cast<bool>(os), ErrorKind::Io, "write failed: " + path);
  return path;
}

}  // namespace localno
