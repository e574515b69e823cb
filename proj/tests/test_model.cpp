#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "localno/model.hpp"
#include "localno/train.hpp"
#include "test_util.hpp"

using namespace localno;
using std::numbers::pi;

namespace {

BlockConfig all_branches(std::size_t modes, KernelBasis basis) {
  BlockConfig b;
  b.spectral = b.differential = b.local_integral = b.pointwise = true;
  b.modes = modes;
  b.basis = std::move(basis);
  return b;
}

// y = W x + b for every point, written out independently of the model code.
Field affine_oracle(const Linear& L, const Field& x) {
  Field y(x.batch(), L.out, x.points());
  for (std::size_t s = 0; s < x.batch(); ++s)
    for (std::size_t o = 0; o < L.out; ++o)
      for (std::size_t p = 0; p < x.points(); ++p) {
        double v = L.b[o];
        for (std::size_t i = 0; i < L.in; ++i) v += L.w[o * L.in + i] * x(s, i, p);
        y(s, o, p) = v;
      }
  return y;
}

double objective(const LocalNOModel& m, const ModelContext& ctx, const Field& x, const Field& u) {
  return testutil::dot(u.values(), model_forward(m, ctx, x).values());
}

}  // namespace

TEST(ModelForward, ZeroParametersGiveZeroOutput) {
  const auto g = make_unit_square(12);
  const auto cfg = ModelConfig::uniform(1, 2, 6, 3, all_branches(4, default_planar_basis(0.2)));
  const auto m = make_zero_model(cfg);
  const auto x = testutil::random_field(2, 1, g.size(), 1);
  EXPECT_EQ(testutil::max_abs(model_forward(m, g, x).values()), 0.0);
}

TEST(ModelForward, PointwiseOnlyLinearModelIsAnAffineChain) {
  const auto g = make_unit_square(9);
  BlockConfig b;
  b.spectral = false;
  auto cfg = ModelConfig::uniform(2, 3, 5, 3, b);
  cfg.activation = Activation::Identity;
  cfg.input_scale = 2.0;
  cfg.output_scale = 3.0;
  const auto m = init_model(cfg, 7);
  const auto x = testutil::random_field(2, 2, g.size(), 8);

  // lifting input: data / input_scale, then coordinates
  Field z(2, 4, g.size());
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t p = 0; p < g.size(); ++p) {
      z(s, 0, p) = x(s, 0, p) / 2.0;
      z(s, 1, p) = x(s, 1, p) / 2.0;
      z(s, 2, p) = g.coord(p, 0);
      z(s, 3, p) = g.coord(p, 1);
    }
  Field h = affine_oracle(m.lift, z);
  for (const auto& bp : m.blocks) h = affine_oracle(bp.pointwise, h);  // one branch: scale 1
  Field y = affine_oracle(m.proj_out, affine_oracle(m.proj_hidden, h));
  for (auto& v : y.values()) v *= 3.0;
  const auto out = model_forward(m, g, x);
  EXPECT_LE(testutil::max_abs_diff(out.values(), y.values()), 1e-12);
}

TEST(ModelForward, BranchScaleIsInverseSqrtOfEnabledCount) {
  BlockConfig b;
  EXPECT_DOUBLE_EQ(b.scale(), 1.0 / std::sqrt(2.0));
  b.differential = b.local_integral = true;
  EXPECT_DOUBLE_EQ(b.scale(), 0.5);
  b.spectral = b.differential = b.local_integral = false;
  EXPECT_DOUBLE_EQ(b.scale(), 1.0);
  b.pointwise = false;
  EXPECT_THROW(ModelConfig::uniform(1, 1, 4, 1, b).validate(), Error);
}

TEST(ModelForward, DisablingABranchEqualsZeroingItAtFixedScale) {
  const auto g = make_unit_square(10);
  auto full = all_branches(4, default_planar_basis(0.25));
  full.scale_override = 0.5;
  auto cfg = ModelConfig::uniform(1, 1, 4, 2, full);
  const auto m = init_model(cfg, 11);
  const auto x = testutil::random_field(2, 1, g.size(), 12);
  for (int which = 0; which < 4; ++which) {
    auto zeroed = m;
    auto reduced_cfg = cfg;
    for (std::size_t i = 0; i < m.blocks.size(); ++i) {
      auto& bp = zeroed.blocks[i];
      auto& bc = reduced_cfg.blocks[i];
      if (which == 0) {
        for (auto& w : bp.spectral.w) w = 0.0;
        bc.spectral = false;
      } else if (which == 1) {
        for (auto& w : bp.differential.taps) w = 0.0;
        bc.differential = false;
      } else if (which == 2) {
        for (auto& w : bp.disco.theta) w = 0.0;
        bc.local_integral = false;
      } else {
        for (auto& w : bp.pointwise.w) w = 0.0;
        for (auto& w : bp.pointwise.b) w = 0.0;
        bc.pointwise = false;
      }
    }
    // same parameters for the remaining branches
    auto reduced = make_zero_model(reduced_cfg);
    reduced.lift = m.lift;
    reduced.proj_hidden = m.proj_hidden;
    reduced.proj_out = m.proj_out;
    for (std::size_t i = 0; i < m.blocks.size(); ++i) {
      if (which != 0) reduced.blocks[i].spectral = m.blocks[i].spectral;
      if (which != 1) reduced.blocks[i].differential = m.blocks[i].differential;
      if (which != 2) reduced.blocks[i].disco = m.blocks[i].disco;
      if (which != 3) reduced.blocks[i].pointwise = m.blocks[i].pointwise;
    }
    const auto a = model_forward(zeroed, g, x);
    const auto b = model_forward(reduced, g, x);
    EXPECT_LE(testutil::max_abs_diff(a.values(), b.values()), 1e-12) << "branch " << which;
  }
}

TEST(ModelForward, TorusModelCommutesWithTranslations) {
  const auto g = make_regular_grid({16, 16}, {1.0, 1.0}, true);
  auto cfg = ModelConfig::uniform(2, 1, 6, 2, all_branches(6, RadialAnisotropicBasis(0.15, 1, 4)));
  cfg.append_coords = false;
  cfg.padding = Padding::Periodic;
  const auto m = init_model(cfg, 13);
  const auto ctx = prepare_context(m, g);
  const auto x = testutil::random_field(1, 2, g.size(), 14);
  const auto y = model_forward(m, ctx, x);
  for (long a : {1L, 5L, -3L})
    for (long b : {0L, 2L, 7L}) {
      const auto lhs = model_forward(m, ctx, translate_field(g, x, {a, b}));
      EXPECT_LE(testutil::max_abs_diff(lhs.values(), translate_field(g, y, {a, b}).values()), 1e-8);
    }
}

TEST(ModelForward, RejectsMismatchedInput) {
  const auto g = make_unit_square(8);
  const auto m = init_model(ModelConfig::uniform(2, 1, 4, 1, BlockConfig{}), 1);
  try {
    model_forward(m, g, Field(1, 3, g.size()));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
  }
  EXPECT_THROW(model_forward(m, make_unit_square(9), Field(1, 2, 64)), Error);
}

TEST(ModelResolution, SameGridIsBitwiseIdentical) {
  const auto g = make_unit_square(12);
  const auto m = init_model(ModelConfig::uniform(1, 1, 4, 2, all_branches(4, default_planar_basis(0.2))), 3);
  const auto x = testutil::random_field(2, 1, g.size(), 4);
  EXPECT_EQ(model_apply_at_resolution(m, g, x), model_forward(m, prepare_context(m, g), x));
}

TEST(ModelResolution, SpectralOnlyLinearModelTransfersOnBandlimitedInput) {
  BlockConfig b;
  b.pointwise = false;
  b.modes = 6;
  auto cfg = ModelConfig::uniform(1, 1, 4, 3, b);
  cfg.append_coords = false;
  cfg.activation = Activation::Identity;
  const auto m = init_model(cfg, 5);
  auto field = [](const Grid& g) {
    Field x(1, 1, g.size());
    for (std::size_t p = 0; p < g.size(); ++p) {
      const double a = g.coord(p, 0), c = g.coord(p, 1);
      x(0, 0, p) = 0.5 + std::sin(2 * pi * (a + 2 * c)) + 0.3 * std::cos(2 * pi * (2 * a - c));
    }
    return x;
  };
  const auto g1 = make_regular_grid({16, 16}, {1.0, 1.0}, true);
  const auto g2 = make_regular_grid({32, 32}, {1.0, 1.0}, true);
  const auto y1 = model_apply_at_resolution(m, g1, field(g1));
  const auto y2 = model_apply_at_resolution(m, g2, field(g2));
  double e = 0.0;
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t c = 0; c < 16; ++c) e = std::max(e, std::abs(y1(0, 0, r * 16 + c) - y2(0, 0, 2 * r * 32 + 2 * c)));
  EXPECT_LE(e, 1e-8);
}

TEST(ModelResolution, CutoffBelowSpacingIsDegenerate) {
  BlockConfig b;
  b.local_integral = true;
  b.basis = default_planar_basis(0.05);
  const auto m = init_model(ModelConfig::uniform(1, 1, 4, 1, b), 1);
  EXPECT_NO_THROW(prepare_context(m, make_unit_square(64)));
  try {
    prepare_context(m, make_unit_square(16));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::AssemblyDegenerate);
  }
}

TEST(ModelParams, CountsFollowTheLayout) {
  Linear L(3, 5);
  EXPECT_EQ(L.w.size() + L.b.size(), 3u * 5u + 5u);
  EXPECT_EQ(SpectralWeights(4, 3, {6, 5}).w.size() * 2, 2u * 3u * 4u * 6u * 5u);

  BlockConfig fno;
  fno.modes = 20;
  const auto a = make_zero_model(ModelConfig::uniform(1, 1, 41, 4, fno));
  EXPECT_EQ(count_params(a), 2700179u);
  EXPECT_NEAR(static_cast<double>(count_params(a)), 2.715e6, 0.02 * 2.715e6);

  BlockConfig diff;
  diff.modes = 12;
  diff.differential = true;
  const auto b = make_zero_model(ModelConfig::uniform(1, 1, 65, 4, diff));
  EXPECT_EQ(count_params(b), 2611831u);
  EXPECT_NEAR(static_cast<double>(count_params(b)), 2.638e6, 0.02 * 2.638e6);
}

TEST(ModelParams, FlattenRoundTripsAndAccumulates) {
  const auto m = init_model(ModelConfig::uniform(1, 1, 4, 2, all_branches(4, default_planar_basis(0.2))), 9);
  const auto flat = flatten_params(m);
  EXPECT_EQ(flat.size(), count_params(m));
  auto z = zeros_like(m);
  unflatten_params(z, flat);
  EXPECT_EQ(flatten_params(z), flat);
  accumulate_params(z, m, -1.0);
  EXPECT_EQ(testutil::max_abs(flatten_params(z)), 0.0);
  EXPECT_THROW(unflatten_params(z, std::vector<double>(flat.size() + 1)), Error);
}

TEST(ModelVjp, FullModelMatchesFiniteDifferences) {
  const auto g = make_unit_square(8);
  auto cfg = ModelConfig::uniform(2, 1, 4, 2, all_branches(4, default_planar_basis(0.3)));
  cfg.output_scale = 1.7;
  cfg.input_scale = 0.8;
  const auto m = init_model(cfg, 21);
  const auto ctx = prepare_context(m, g);
  const auto x = testutil::random_field(2, 2, g.size(), 22);
  const auto u = testutil::random_field(2, 1, g.size(), 23);
  ModelTape tape;
  model_forward(m, ctx, x, &tape);
  const auto grads = model_vjp(m, ctx, tape, u);
  const auto report = grad_check(
      "model",
      [&](std::span<const double> p) {
        auto mm = m;
        unflatten_params(mm, p);
        return objective(mm, ctx, x, u);
      },
      flatten_params(m), flatten_params(grads.params), 1e-5);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
  EXPECT_EQ(report.checked, count_params(m));

  const double ex = testutil::directional_check(
      [&](std::span<const double> xv) {
        Field xx = x;
        std::copy(xv.begin(), xv.end(), xx.values().begin());
        return objective(m, ctx, xx, u);
      },
      std::vector<double>(x.values().begin(), x.values().end()), grads.input.values(), 24);
  EXPECT_LE(ex, 1e-6);
}

TEST(ModelVjp, SphereModelWithIntegralBranch) {
  const auto g = make_equiangular_sphere_grid(6, 12);
  BlockConfig b;
  b.spectral = false;
  b.local_integral = true;
  b.basis = RadialAnisotropicBasis(0.6, 1, 4);
  auto cfg = ModelConfig::uniform(1, 1, 3, 2, b);
  cfg.dim = 3;
  const auto m = init_model(cfg, 31);
  const auto ctx = prepare_context(m, g);
  EXPECT_EQ(ctx.coords.channels(), 3u);
  const auto x = testutil::random_field(1, 1, g.size(), 32);
  const auto u = testutil::random_field(1, 1, g.size(), 33);
  ModelTape tape;
  model_forward(m, ctx, x, &tape);
  const auto grads = model_vjp(m, ctx, tape, u);
  const auto report = grad_check(
      "sphere model",
      [&](std::span<const double> p) {
        auto mm = m;
        unflatten_params(mm, p);
        return objective(mm, ctx, x, u);
      },
      flatten_params(m), flatten_params(grads.params), 1e-5);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(ModelConfigJson, RoundTrip) {
  auto cfg = ModelConfig::uniform(2, 3, 8, 2, all_branches(6, default_planar_basis(0.05)));
  cfg.blocks[1].differential = false;
  cfg.blocks[0].scale_override = 0.25;
  cfg.input_scale = 0.1;
  const auto back = config_from_json(config_to_json(cfg));
  EXPECT_EQ(config_to_json(back), config_to_json(cfg));
  EXPECT_THROW(config_from_json({{"width", 3}}), Error);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  const auto m = init_model(ModelConfig::uniform(1, 1, 4, 2, all_branches(4, default_planar_basis(0.2))), 41);
  const auto path = testutil::temp_path("model.ckpt");
  write_checkpoint(m, path, {{"note", "x"}});
  nlohmann::json extra;
  const auto back = read_checkpoint(path, &extra);
  EXPECT_EQ(flatten_params(back), flatten_params(m));
  EXPECT_EQ(config_to_json(back.config), config_to_json(m.config));
  EXPECT_EQ(extra.at("note"), "x");
}

TEST(Checkpoint, TruncatedFileIsRejected) {
  const auto m = init_model(ModelConfig::uniform(1, 1, 4, 1, BlockConfig{}), 42);
  const auto path = testutil::temp_path("model_trunc.ckpt");
  write_checkpoint(m, path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
  try {
    read_checkpoint(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IncompatibleDataset);
  }
}
