#pragma once

// The local neural operator: a pointwise lifting, a stack of blocks that sum
// up to four parallel branches (truncated Fourier, differential, local
// integral, pointwise linear), and a two-layer pointwise projection.
//
// Data flow for one block with input x:
//   pre = s * (sum of enabled branches applied to x),  s = n^{-1/2}
//   out = gelu(pre), except after the last block.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "localno/basis.hpp"
#include "localno/binary_io.hpp"
#include "localno/differential.hpp"
#include "localno/disco.hpp"
#include "localno/error.hpp"
#include "localno/field.hpp"
#include "localno/geometry.hpp"
#include "localno/rng.hpp"
#include "localno/spectral.hpp"

namespace localno {

enum class Activation { Gelu, Identity };

struct BlockConfig {
  bool spectral = true;
  bool differential = false;
  bool local_integral = false;
  bool pointwise = true;
  std::size_t width = 0;
  std::size_t modes = 12;      ///< "modes M": M signed bins on leading axes, M/2 on the last
  std::size_t diff_size = 3;
  KernelBasis basis = default_planar_basis();
  /// Replaces n^{-1/2}; used to compare configurations at a fixed scale.
  std::optional<double> scale_override;

  std::size_t enabled() const {
    return std::size_t{spectral} + std::size_t{differential} + std::size_t{local_integral} + std::size_t{pointwise};
  }
  double scale() const {
    if (scale_override) return *scale_override;
    return 1.0 / std::sqrt(static_cast<double>(enabled()));
  }
};

struct ModelConfig {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t width = 16;
  std::size_t dim = 2;
  /// Append the point coordinates as extra input channels.
  bool append_coords = true;
  std::size_t projection_hidden = 0;  ///< 0 means 2 * width
  Activation activation = Activation::Gelu;
  Padding padding = Padding::Reflective;
  /// Assembly options for the local integral branch.
  bool disco_normalize = true;
  /// Data normalization: the network sees input / input_scale and its raw
  /// output is multiplied by output_scale.
  double input_scale = 1.0;
  double output_scale = 1.0;
  std::vector<BlockConfig> blocks;

  std::size_t hidden() const { return projection_hidden ? projection_hidden : 2 * width; }

  /// Extra channels appended for coordinates: the grid dimension on boxes,
  /// three Cartesian components on the sphere.
  std::size_t coord_channels() const { return append_coords ? (dim == 3 ? 3 : dim) : 0; }

  /// `blocks` copies of one block layout at the model width.
  static ModelConfig uniform(std::size_t in, std::size_t out, std::size_t width, std::size_t blocks, BlockConfig block) {
    ModelConfig c;
    c.in_channels = in;
    c.out_channels = out;
    c.width = width;
    block.width = width;
    c.blocks.assign(blocks, block);
    return c;
  }

  void validate() const {
    require(in_channels >= 1 && out_channels >= 1 && width >= 1, ErrorKind::InvalidArgument,
            "channel counts must be >= 1");
    require(!blocks.empty(), ErrorKind::InvalidArgument, "model needs at least one block");
    require(dim >= 1 && dim <= 3, ErrorKind::InvalidArgument, "model dimension must be 1, 2 or 3 (sphere)");
    require(input_scale > 0.0 && output_scale > 0.0, ErrorKind::InvalidArgument, "normalization scales must be > 0");
    for (const auto& b : blocks) {
      require(b.enabled() >= 1, ErrorKind::InvalidArgument, "every block needs at least one branch");
      require(b.width == width, ErrorKind::InvalidArgument, "block widths must match the model width");
      require(!b.spectral || b.modes >= 1, ErrorKind::InvalidArgument, "spectral branch needs modes >= 1");
      require(!b.differential || b.diff_size % 2 == 1, ErrorKind::InvalidArgument, "kernel size must be odd");
    }
  }
};

inline nlohmann::json block_to_json(const BlockConfig& b) {
  nlohmann::json j = {{"spectral", b.spectral},   {"differential", b.differential}, {"local_integral", b.local_integral},
                      {"pointwise", b.pointwise}, {"width", b.width},               {"modes", b.modes},
                      {"diff_size", b.diff_size}, {"basis", basis_to_json(b.basis)}};
  if (b.scale_override) j["scale_override"] = *b.scale_override;
  return j;
}

inline BlockConfig block_from_json(const nlohmann::json& j) {
  BlockConfig b;
  b.spectral = j.value("spectral", true);
  b.differential = j.value("differential", false);
  b.local_integral = j.value("local_integral", false);
  b.pointwise = j.value("pointwise", true);
  b.width = j.at("width").get<std::size_t>();
  b.modes = j.value("modes", std::size_t{12});
  b.diff_size = j.value("diff_size", std::size_t{3});
  if (j.contains("basis")) b.basis = basis_from_json(j.at("basis"));
  if (j.contains("scale_override")) b.scale_override = j.at("scale_override").get<double>();
  return b;
}

inline nlohmann::json config_to_json(const ModelConfig& c) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : c.blocks) blocks.push_back(block_to_json(b));
  return {{"in_channels", c.in_channels},
          {"out_channels", c.out_channels},
          {"width", c.width},
          {"dim", c.dim},
          {"append_coords", c.append_coords},
          {"projection_hidden", c.hidden()},
          {"activation", c.activation == Activation::Gelu ? "gelu" : "identity"},
          {"padding", to_string(c.padding)},
          {"disco_normalize", c.disco_normalize},
          {"input_scale", c.input_scale},
          {"output_scale", c.output_scale},
          {"blocks", blocks}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.in_channels = j.at("in_channels").get<std::size_t>();
    c.out_channels = j.at("out_channels").get<std::size_t>();
    c.width = j.at("width").get<std::size_t>();
    c.dim = j.value("dim", std::size_t{2});
    c.append_coords = j.value("append_coords", true);
    c.projection_hidden = j.value("projection_hidden", std::size_t{0});
    const std::string act = j.value("activation", "gelu");
    require(act == "gelu" || act == "identity", ErrorKind::InvalidArgument, "unknown activation '" + act + "'");
    c.activation = act == "gelu" ? Activation::Gelu : Activation::Identity;
    c.padding = padding_from_string(j.value("padding", "reflective"));
    c.disco_normalize = j.value("disco_normalize", true);
    c.input_scale = j.value("input_scale", 1.0);
    c.output_scale = j.value("output_scale", 1.0);
    for (const auto& b : j.at("blocks")) c.blocks.push_back(block_from_json(b));
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("malformed model config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Parameters

/// Pointwise affine map, weights (out, in) row-major.
struct Linear {
  std::size_t in = 0, out = 0;
  std::vector<double> w, b;

  Linear() = default;
  Linear(std::size_t i, std::size_t o) : in(i), out(o), w(i * o, 0.0), b(o, 0.0) {}

  void randomize(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& x : w) x = rng.uniform(-bound, bound);
    for (auto& x : b) x = rng.uniform(-bound, bound);
  }
};

struct BlockParams {
  SpectralWeights spectral;
  DifferentialKernel differential;
  DiscoParams disco;
  Linear pointwise;
};

struct LocalNOModel {
  ModelConfig config;
  Linear lift;
  std::vector<BlockParams> blocks;
  Linear proj_hidden, proj_out;

  /// Calls f(name, span) for every parameter array in a fixed order. Complex
  /// spectral weights are exposed as interleaved (re, im) pairs.
  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

 private:
  template <class Self, class F>
  static void visit_impl(Self& m, F& f) {
    using D = std::conditional_t<std::is_const_v<Self>, const double, double>;
    auto span_of = [](auto& v) { return std::span<D>(v.data(), v.size()); };
    f(std::string("lift.w"), span_of(m.lift.w));
    f(std::string("lift.b"), span_of(m.lift.b));
    for (std::size_t i = 0; i < m.blocks.size(); ++i) {
      auto& bp = m.blocks[i];
      const std::string pre = "block" + std::to_string(i) + ".";
      if (!bp.spectral.w.empty())
        f(pre + "spectral", std::span<D>(reinterpret_cast<D*>(bp.spectral.w.data()), 2 * bp.spectral.w.size()));
      if (!bp.differential.taps.empty()) f(pre + "differential", span_of(bp.differential.taps));
      if (!bp.disco.theta.empty()) f(pre + "disco", span_of(bp.disco.theta));
      if (!bp.pointwise.w.empty()) {
        f(pre + "pointwise.w", span_of(bp.pointwise.w));
        f(pre + "pointwise.b", span_of(bp.pointwise.b));
      }
    }
    f(std::string("proj_hidden.w"), span_of(m.proj_hidden.w));
    f(std::string("proj_hidden.b"), span_of(m.proj_hidden.b));
    f(std::string("proj_out.w"), span_of(m.proj_out.w));
    f(std::string("proj_out.b"), span_of(m.proj_out.b));
  }
};

/// Model with the given config and all parameters zero.
inline LocalNOModel make_zero_model(const ModelConfig& config) {
  config.validate();
  LocalNOModel m;
  m.config = config;
  const std::size_t w = config.width;
  m.lift = Linear(config.in_channels + config.coord_channels(), w);
  const std::size_t spatial = config.dim == 3 ? 2 : config.dim;
  for (const auto& bc : config.blocks) {
    BlockParams bp;
    if (bc.spectral) bp.spectral = SpectralWeights(w, w, SpectralWeights::bins_for(spatial, bc.modes));
    if (bc.differential) bp.differential = DifferentialKernel(w, w, bc.diff_size, spatial, config.padding);
    if (bc.local_integral) bp.disco = DiscoParams(w, w, basis_size(bc.basis));
    if (bc.pointwise) bp.pointwise = Linear(w, w);
    m.blocks.push_back(std::move(bp));
  }
  m.proj_hidden = Linear(w, config.hidden());
  m.proj_out = Linear(config.hidden(), config.out_channels);
  return m;
}

/// Seeded initialization: uniform(+-1/sqrt(fan_in)) for pointwise, differential
/// and integral weights; spectral weights with E|w|^2 = 1/(in*out).
inline LocalNOModel init_model(const ModelConfig& config, std::uint64_t seed) {
  LocalNOModel m = make_zero_model(config);
  Rng rng(seed);
  m.lift.randomize(rng);
  for (auto& bp : m.blocks) {
    if (!bp.spectral.w.empty()) bp.spectral.randomize(rng);
    if (!bp.differential.taps.empty()) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(bp.differential.in_channels *
                                                                bp.differential.taps_per_slice()));
      for (auto& t : bp.differential.taps) t = rng.uniform(-bound, bound);
    }
    if (!bp.disco.theta.empty()) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(bp.disco.in_channels * bp.disco.basis));
      for (auto& t : bp.disco.theta) t = rng.uniform(-bound, bound);
    }
    if (!bp.pointwise.w.empty()) bp.pointwise.randomize(rng);
  }
  m.proj_hidden.randomize(rng);
  m.proj_out.randomize(rng);
  return m;
}

/// Same shapes as `m`, all zero; used as a gradient accumulator.
inline LocalNOModel zeros_like(const LocalNOModel& m) { return make_zero_model(m.config); }

inline std::size_t count_params(const LocalNOModel& m) {
  std::size_t n = 0;
  m.visit([&](const std::string&, std::span<const double> v) { n += v.size(); });
  return n;
}

/// Adds `scale * src` into `dst` array by array (shapes must match).
inline void accumulate_params(LocalNOModel& dst, const LocalNOModel& src, double scale = 1.0) {
  std::vector<std::span<const double>> s;
  src.visit([&](const std::string&, std::span<const double> v) { s.push_back(v); });
  std::size_t i = 0;
  dst.visit([&](const std::string&, std::span<double> v) {
    require(i < s.size() && s[i].size() == v.size(), ErrorKind::InvalidArgument, "parameter shapes differ");
    for (std::size_t k = 0; k < v.size(); ++k) v[k] += scale * s[i][k];
    ++i;
  });
}

inline std::vector<double> flatten_params(const LocalNOModel& m) {
  std::vector<double> out;
  m.visit([&](const std::string&, std::span<const double> v) { out.insert(out.end(), v.begin(), v.end()); });
  return out;
}

inline void unflatten_params(LocalNOModel& m, std::span<const double> flat) {
  std::size_t off = 0;
  m.visit([&](const std::string&, std::span<double> v) {
    require(off + v.size() <= flat.size(), ErrorKind::InvalidArgument, "flat parameter vector too short");
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off), flat.begin() + static_cast<std::ptrdiff_t>(off + v.size()),
              v.begin());
    off += v.size();
  });
  require(off == flat.size(), ErrorKind::InvalidArgument, "flat parameter vector too long");
}

// ---------------------------------------------------------------------------
// Per-grid state

/// Everything the forward pass derives from the grid: coordinate channels
/// and one assembled integral kernel per distinct basis.
struct ModelContext {
  std::shared_ptr<const Grid> grid;
  Field coords;  ///< (1, coord_channels, points)
  std::vector<std::shared_ptr<const AssembledKernel>> disco;  ///< per block, null when the branch is off
};

inline ModelContext prepare_context(const LocalNOModel& m, const Grid& grid) {
  const auto& cfg = m.config;
  ModelContext ctx;
  ctx.grid = std::make_shared<const Grid>(grid);
  const bool sphere = grid.topology() == Topology::Sphere;
  require(sphere ? cfg.dim == 3 : grid.dim() == cfg.dim, ErrorKind::InvalidArgument,
          "grid dimension does not match the model (dim 3 means sphere)");
  const std::size_t N = grid.size();
  ctx.coords = Field(1, cfg.coord_channels(), N);
  if (cfg.append_coords) {
    for (std::size_t j = 0; j < N; ++j) {
      if (sphere) {
        const auto x = sphere_to_cartesian(grid.coord(j, 0), grid.coord(j, 1));
        for (std::size_t k = 0; k < 3; ++k) ctx.coords(0, k, j) = x[k];
      } else {
        for (std::size_t k = 0; k < grid.dim(); ++k) ctx.coords(0, k, j) = grid.coord(j, k);
      }
    }
  }
  for (const auto& bc : cfg.blocks) {
    if (bc.spectral || bc.differential)
      require(grid.is_regular() && !sphere, ErrorKind::UnsupportedTopology,
              "spectral and differential branches need a regular box grid");
  }
  std::map<std::string, std::shared_ptr<const AssembledKernel>> cache;
  AssemblyOptions opt;
  opt.normalize = cfg.disco_normalize;
  for (const auto& bc : cfg.blocks) {
    if (!bc.local_integral) {
      ctx.disco.push_back(nullptr);
      continue;
    }
    const std::string key = basis_to_json(bc.basis).dump();
    auto it = cache.find(key);
    if (it == cache.end()) {
      auto k = std::make_shared<const AssembledKernel>(assemble(grid, grid, bc.basis, opt));
      // A cutoff below the grid spacing leaves the outer basis functions
      // without a single sample; the learned filter cannot be represented.
      for (std::size_t l = 0; l < k->basis; ++l) {
        bool any = false;
        for (std::size_t e = 0; e < k->nnz() && !any; ++e) any = k->value(l, e) != 0.0;
        require(any, ErrorKind::AssemblyDegenerate,
                "basis function " + std::to_string(l) + " has no support on this grid (cutoff below grid spacing)");
      }
      it = cache.emplace(key, std::move(k)).first;
    }
    ctx.disco.push_back(it->second);
  }
  return ctx;
}

// ---------------------------------------------------------------------------
// Forward and reverse passes

namespace detail {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

inline Field linear_forward(const Linear& L, const Field& x) {
  require(x.channels() == L.in, ErrorKind::InvalidArgument, "pointwise layer channel mismatch");
  const auto N = static_cast<Eigen::Index>(x.points());
  Field y(x.batch(), L.out, x.points());
  // owned copies: parameter vectors live at arbitrary alignment
  const MatR W = CMapR(L.w.data(), static_cast<Eigen::Index>(L.out), static_cast<Eigen::Index>(L.in));
  const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(L.b.data(), static_cast<Eigen::Index>(L.out));
  for (std::size_t s = 0; s < x.batch(); ++s) {
    CMapR X(x.sample(s).data(), static_cast<Eigen::Index>(L.in), N);
    MapR Y(y.sample(s).data(), static_cast<Eigen::Index>(L.out), N);
    Y.noalias() = W * X;
    Y.colwise() += b;
  }
  return y;
}

/// Accumulates parameter gradients into g and returns the input gradient.
inline Field linear_vjp(const Linear& L, const Field& x, const Field& up, Linear& g) {
  const auto N = static_cast<Eigen::Index>(x.points());
  const auto I = static_cast<Eigen::Index>(L.in), O = static_cast<Eigen::Index>(L.out);
  Field gx(x.batch(), L.in, x.points());
  const MatR W = CMapR(L.w.data(), O, I);
  MatR gW = CMapR(g.w.data(), O, I);
  Eigen::VectorXd gb = Eigen::Map<const Eigen::VectorXd>(g.b.data(), O);
  for (std::size_t s = 0; s < x.batch(); ++s) {
    CMapR X(x.sample(s).data(), I, N);
    CMapR G(up.sample(s).data(), O, N);
    gW.noalias() += G * X.transpose();
    gb += G.rowwise().sum();
    MapR GX(gx.sample(s).data(), I, N);
    GX.noalias() = W.transpose() * G;
  }
  MapR(g.w.data(), O, I) = gW;
  Eigen::Map<Eigen::VectorXd>(g.b.data(), O) = gb;
  return gx;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

inline void activate(Activation a, std::span<double> v) {
  if (a == Activation::Gelu)
    for (auto& x : v) x = gelu(x);
}

/// Applies the activation in place and, when `slope` is non-null, stores
/// its derivative at the pre-activation values (one erf and one exp each).
inline void activate(Activation a, std::span<double> v, std::vector<double>* slope) {
  if (!slope) return activate(a, v);
  if (a != Activation::Gelu) {
    slope->clear();
    return;
  }
  slope->resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = v[i];
    const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
    (*slope)[i] = cdf + x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    v[i] = x * cdf;
  }
}

inline void activate_backward(std::span<const double> slope, std::span<double> g) {
  if (slope.empty()) return;  // identity
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= slope[i];
}

inline void add_into(Field& dst, const Field& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

inline void scale(Field& f, double s) {
  for (auto& x : f.values()) x *= s;
}

/// Data channels scaled by 1/input_scale followed by the coordinate channels.
inline Field lifted_input(const ModelConfig& cfg, const ModelContext& ctx, const Field& input) {
  const std::size_t C = cfg.coord_channels();
  Field z(input.batch(), cfg.in_channels + C, input.points());
  for (std::size_t b = 0; b < input.batch(); ++b) {
    for (std::size_t c = 0; c < cfg.in_channels; ++c) {
      auto src = input.channel(b, c);
      auto dst = z.channel(b, c);
      for (std::size_t p = 0; p < src.size(); ++p) dst[p] = src[p] / cfg.input_scale;
    }
    for (std::size_t c = 0; c < C; ++c) {
      auto src = ctx.coords.channel(0, c);
      std::copy(src.begin(), src.end(), z.channel(b, cfg.in_channels + c).begin());
    }
  }
  return z;
}

inline Field block_branches(const BlockConfig& bc, const BlockParams& bp, const ModelContext& ctx,
                            std::size_t index, const Field& x) {
  const Grid& g = *ctx.grid;
  Field sum(x.batch(), x.channels(), x.points());
  if (bc.spectral) add_into(sum, spectral_conv_forward(bp.spectral, g.shape(), x));
  if (bc.differential) add_into(sum, diff_conv_forward(bp.differential, g, x));
  if (bc.local_integral) add_into(sum, disco_forward(*ctx.disco[index], bp.disco, x));
  if (bc.pointwise) add_into(sum, linear_forward(bp.pointwise, x));
  scale(sum, bc.scale());
  return sum;
}

}  // namespace detail

/// Intermediate values kept for the reverse pass.
struct ModelTape {
  Field lifted_in;
  std::vector<Field> block_in;   ///< input of each block
  /// Activation derivative at each block's pre-activation values (empty for
  /// the last block and for the identity activation).
  std::vector<std::vector<double>> block_slope;
  std::vector<double> hidden_slope;
  Field hidden;  ///< projection hidden layer after the activation
};

inline void check_model_input(const LocalNOModel& m, const ModelContext& ctx, const Field& input) {
  require(ctx.grid != nullptr, ErrorKind::InvalidArgument, "model context has no grid");
  require(ctx.disco.size() == m.blocks.size(), ErrorKind::InvalidArgument, "model context built for another model");
  require_shape(input, m.config.in_channels, ctx.grid->size(), "model input");
}

inline Field model_forward(const LocalNOModel& m, const ModelContext& ctx, const Field& input,
                           ModelTape* tape = nullptr) {
  check_model_input(m, ctx, input);
  const auto& cfg = m.config;
  Field z = detail::lifted_input(cfg, ctx, input);
  Field x = detail::linear_forward(m.lift, z);
  if (tape) {
    tape->lifted_in = std::move(z);
    tape->block_in.clear();
    tape->block_slope.assign(m.blocks.size(), {});
  }
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    Field out = detail::block_branches(cfg.blocks[i], m.blocks[i], ctx, i, x);
    if (i + 1 != m.blocks.size()) detail::activate(cfg.activation, out.values(), tape ? &tape->block_slope[i] : nullptr);
    if (tape) tape->block_in.push_back(std::move(x));
    x = std::move(out);
  }
  Field h = detail::linear_forward(m.proj_hidden, x);
  detail::activate(cfg.activation, h.values(), tape ? &tape->hidden_slope : nullptr);
  Field y = detail::linear_forward(m.proj_out, h);
  detail::scale(y, cfg.output_scale);
  if (tape) {
    tape->block_in.push_back(std::move(x));  // input of the projection
    tape->hidden = std::move(h);
  }
  return y;
}

/// Convenience overload that prepares the grid state on every call.
inline Field model_forward(const LocalNOModel& m, const Grid& grid, const Field& input) {
  return model_forward(m, prepare_context(m, grid), input);
}

/// Evaluates on any compatible grid with unchanged parameters: the
/// differential branch reads h from the new grid, the integral branch is
/// reassembled with the same basis and coefficients, the spectral branch
/// keeps its truncated modes.
inline Field model_apply_at_resolution(const LocalNOModel& m, const Grid& grid, const Field& input) {
  return model_forward(m, prepare_context(m, grid), input);
}

struct ModelGrads {
  LocalNOModel params;
  Field input;
};

/// Reverse pass for a tape recorded by model_forward on the same input.
inline ModelGrads model_vjp(const LocalNOModel& m, const ModelContext& ctx, const ModelTape& tape,
                            const Field& upstream) {
  const auto& cfg = m.config;
  const std::size_t nb = m.blocks.size();
  require(tape.block_in.size() == nb + 1, ErrorKind::InvalidArgument, "tape does not match the model");
  require_shape(upstream, cfg.out_channels, ctx.grid->size(), "model upstream");
  ModelGrads g{zeros_like(m), Field()};

  Field up = upstream;
  detail::scale(up, cfg.output_scale);
  Field gh = detail::linear_vjp(m.proj_out, tape.hidden, up, g.params.proj_out);
  detail::activate_backward(tape.hidden_slope, gh.values());
  Field gx = detail::linear_vjp(m.proj_hidden, tape.block_in[nb], gh, g.params.proj_hidden);

  const Grid& grid = *ctx.grid;
  for (std::size_t i = nb; i-- > 0;) {
    const auto& bc = cfg.blocks[i];
    const auto& bp = m.blocks[i];
    auto& gp = g.params.blocks[i];
    if (i + 1 != nb) detail::activate_backward(tape.block_slope[i], gx.values());
    detail::scale(gx, bc.scale());
    const Field& x = tape.block_in[i];
    Field gin(x.batch(), x.channels(), x.points());
    if (bc.spectral) {
      auto r = spectral_conv_vjp(bp.spectral, grid.shape(), x, gx);
      gp.spectral.w = std::move(r.weights.w);
      detail::add_into(gin, r.input);
    }
    if (bc.differential) {
      auto r = diff_conv_vjp(bp.differential, grid, x, gx);
      gp.differential.taps = std::move(r.taps);
      detail::add_into(gin, r.input);
    }
    if (bc.local_integral) {
      auto r = disco_vjp(*ctx.disco[i], bp.disco, x, gx);
      gp.disco.theta = std::move(r.params.theta);
      detail::add_into(gin, r.input);
    }
    if (bc.pointwise) detail::add_into(gin, detail::linear_vjp(bp.pointwise, x, gx, gp.pointwise));
    gx = std::move(gin);
  }
  Field gz = detail::linear_vjp(m.lift, tape.lifted_in, gx, g.params.lift);
  g.input = Field(gz.batch(), cfg.in_channels, gz.points());
  for (std::size_t b = 0; b < gz.batch(); ++b)
    for (std::size_t c = 0; c < cfg.in_channels; ++c) {
      auto src = gz.channel(b, c);
      auto dst = g.input.channel(b, c);
      for (std::size_t p = 0; p < src.size(); ++p) dst[p] = src[p] / cfg.input_scale;
    }
  return g;
}

// ---------------------------------------------------------------------------
// Checkpoints: JSON header {version, config, arrays[{name, size}]} followed by
// the arrays as little-endian float64 in visit order.

inline constexpr int kCheckpointVersion = 1;
inline constexpr std::string_view kCheckpointMagic = "LNOCKPT";

inline void write_checkpoint(const LocalNOModel& m, const std::string& path, const nlohmann::json& extra = {}) {
  nlohmann::json arrays = nlohmann::json::array();
  m.visit([&](const std::string& name, std::span<const double> v) { arrays.push_back({{"name", name}, {"size", v.size()}}); });
  nlohmann::json header = {{"version", kCheckpointVersion}, {"config", config_to_json(m.config)}, {"arrays", arrays}};
  if (!extra.is_null()) header["extra"] = extra;
  io::write_container(path, kCheckpointMagic, header, [&](std::ostream& os) {
    m.visit([&](const std::string&, std::span<const double> v) { io::write_array<double>(os, v); });
  });
}

inline LocalNOModel read_checkpoint(const std::string& path, nlohmann::json* extra = nullptr) {
  std::ifstream is;
  const auto header = io::open_container(is, path, kCheckpointMagic);
  require(header.value("version", -1) == kCheckpointVersion, ErrorKind::IncompatibleDataset,
          path + ": unsupported checkpoint version");
  ModelConfig cfg;
  try {
    cfg = config_from_json(header.at("config"));
  } catch (const Error& e) {
    throw Error(ErrorKind::IncompatibleDataset, path + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::IncompatibleDataset, path + ": missing config");
  }
  LocalNOModel m = make_zero_model(cfg);
  const auto& arrays = header.at("arrays");
  std::size_t i = 0;
  m.visit([&](const std::string& name, std::span<double> v) {
    require(i < arrays.size() && arrays[i].value("name", "") == name && arrays[i].value("size", std::size_t{0}) == v.size(),
            ErrorKind::IncompatibleDataset, path + ": parameter layout does not match the config at '" + name + "'");
    io::read_array<double>(is, v, path);
    ++i;
  });
  require(i == arrays.size(), ErrorKind::IncompatibleDataset, path + ": extra parameter arrays");
  require(io::remaining_bytes(is) == 0, ErrorKind::IncompatibleDataset, path + ": trailing bytes");
  if (extra) *extra = header.value("extra", nlohmann::json());
  return m;
}

}  // namespace localno
