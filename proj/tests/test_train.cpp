#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "localno/disco.hpp"
#include "localno/train.hpp"
#include "test_util.hpp"

using namespace localno;

namespace {

Field constant_field(std::size_t b, std::size_t c, std::size_t n, double v) {
  Field f(b, c, n);
  for (auto& x : f.values()) x = v;
  return f;
}

SampleSet smooth_pairs(const Grid& g, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  SampleSet s{Field(count, 1, g.size()), Field(count, 1, g.size())};
  for (std::size_t k = 0; k < count; ++k) {
    const double a = rng.normal(), b = rng.normal();
    for (std::size_t p = 0; p < g.size(); ++p) {
      const double x = g.coord(p, 0), y = g.coord(p, 1);
      s.input(k, 0, p) = a * std::sin(3 * x) + b * y;
      s.target(k, 0, p) = 1.0 + a * x * y - 0.5 * b * std::cos(2 * x);
    }
  }
  return s;
}

BlockConfig small_block() {
  BlockConfig b;
  b.modes = 3;
  return b;
}

}  // namespace

TEST(RelativeL2, Examples) {
  const auto g = make_unit_square(9);
  const auto t = constant_field(2, 1, g.size(), 2.0);
  EXPECT_EQ(relative_l2(g, t, t), 0.0);
  EXPECT_NEAR(relative_l2(g, Field(2, 1, g.size()), t), 1.0, 1e-15);
  EXPECT_NEAR(relative_l2(g, constant_field(2, 1, g.size(), 2.2), t), 0.1, 1e-14);
}

TEST(RelativeL2, AveragesPerSampleRatios) {
  const auto g = make_unit_square(5);
  auto t = constant_field(2, 1, g.size(), 1.0);
  auto p = t;
  for (std::size_t i = 0; i < g.size(); ++i) p(1, 0, i) = 1.5;
  const auto per = relative_l2_per_sample(g, p, t);
  ASSERT_EQ(per.size(), 2u);
  EXPECT_EQ(per[0], 0.0);
  EXPECT_NEAR(per[1], 0.5, 1e-15);
  EXPECT_NEAR(relative_l2(g, p, t), 0.25, 1e-15);
}

TEST(RelativeL2, ZeroTargetIsDegenerate) {
  const auto g = make_unit_square(5);
  try {
    relative_l2(g, constant_field(1, 1, g.size(), 1.0), Field(1, 1, g.size()));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateTarget);
  }
}

TEST(SquaredLoss, GradientMatchesFiniteDifferences) {
  const auto g = make_unit_square(6);
  const auto p = testutil::random_field(3, 2, g.size(), 1);
  const auto t = testutil::random_field(3, 2, g.size(), 2);
  Field grad;
  squared_l2_loss(g, p, t, 1.7, &grad);
  const double e = testutil::directional_check(
      [&](std::span<const double> v) {
        Field q = p;
        std::copy(v.begin(), v.end(), q.values().begin());
        return squared_l2_loss(g, q, t, 1.7);
      },
      std::vector<double>(p.values().begin(), p.values().end()), grad.values(), 3);
  EXPECT_LE(e, 1e-8);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  std::vector<double> p{1.0, -2.0, 3.5};
  const auto keep = p;
  AdamState s;
  for (int i = 0; i < 5; ++i) adam_step(p, std::vector<double>(3, 0.0), s, 1e-2);
  EXPECT_EQ(p, keep);
}

TEST(Adam, FirstStepMatchesClosedForm) {
  std::vector<double> p{1.0, -2.0, 0.5};
  const std::vector<double> g{0.3, -4.0, 1e-9};
  AdamState s;
  adam_step(p, g, s, 0.01);
  // after bias correction m_hat = g and v_hat = g^2
  for (std::size_t i = 0; i < 3; ++i) {
    const double expect = std::vector<double>{1.0, -2.0, 0.5}[i] - 0.01 * g[i] / (std::abs(g[i]) + 1e-8);
    EXPECT_NEAR(p[i], expect, 1e-15);
  }
}

TEST(Adam, ConvergesOnAQuadraticBowl) {
  const std::vector<double> centre{0.3, -1.2, 2.0, 0.0, 5.0};
  const std::vector<double> curv{1.0, 10.0, 0.1, 3.0, 0.5};
  std::vector<double> p(5, 0.0), g(5);
  AdamState s;
  auto f = [&] {
    double v = 0.0;
    for (std::size_t i = 0; i < 5; ++i) v += 0.5 * curv[i] * (p[i] - centre[i]) * (p[i] - centre[i]);
    return v;
  };
  const double f0 = f();
  int steps = 0;
  while (f() > 1e-6 * f0 && steps < 2000) {
    for (std::size_t i = 0; i < 5; ++i) g[i] = curv[i] * (p[i] - centre[i]);
    adam_step(p, g, s, steps < 1000 ? 0.05 : 0.005);
    ++steps;
  }
  EXPECT_LE(f(), 1e-6 * f0) << "after " << steps << " steps";
}

TEST(Adam, NonFiniteGradientThrowsAndKeepsParameters) {
  std::vector<double> p{1.0, 2.0};
  AdamState s;
  for (double bad : {std::nan(""), HUGE_VAL}) {
    try {
      adam_step(p, std::vector<double>{0.1, bad}, s, 0.1);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::Diverged);
    }
    EXPECT_EQ(p, (std::vector<double>{1.0, 2.0}));
  }
}

TEST(GradCheck, LinearMapIsExact) {
  Rng rng(4);
  std::vector<double> a(30), x(30);
  for (auto& v : a) v = rng.normal();
  for (auto& v : x) v = rng.normal();
  const auto r = grad_check(
      "linear", [&](std::span<const double> p) { return testutil::dot(a, p); }, x, a, 1e-9);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
  EXPECT_EQ(r.checked, 30u);
}

TEST(GradCheck, DetectsAWrongGradient) {
  std::vector<double> x{1.0, 2.0}, wrong{2.0, 4.4};
  const auto r = grad_check(
      "square", [](std::span<const double> p) { return p[0] * p[0] + p[1] * p[1]; }, x, wrong, 1e-6);
  EXPECT_FALSE(r.passed);
  EXPECT_NEAR(r.max_rel_error, 0.4 / 4.4, 1e-6);
}

TEST(GradCheck, DiscoOnPeriodicLine) {
  const auto g = make_regular_grid({8}, {1.0}, true);
  const auto k = assemble(g, g, HatBasis1D::equidistant(3, 0.125, -0.25));
  DiscoParams p(2, 2, k.basis);
  Rng rng(5);
  for (auto& t : p.theta) t = rng.normal();
  const auto x = testutil::random_field(2, 2, g.size(), 6);
  const auto u = testutil::random_field(2, 2, g.size(), 7);
  const auto grads = disco_vjp(k, p, x, u);
  const auto r = grad_check(
      "disco theta",
      [&](std::span<const double> th) {
        auto q = p;
        std::copy(th.begin(), th.end(), q.theta.begin());
        return testutil::dot(u.values(), disco_forward(k, q, x).values());
      },
      p.theta, grads.params.theta, 1e-6);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(Schedule, HalvesEveryInterval) {
  TrainConfig c;
  c.rate = 1e-3;
  EXPECT_EQ(c.rate_at(0), 1e-3);
  EXPECT_EQ(c.rate_at(9), 1e-3);
  EXPECT_EQ(c.rate_at(10), 5e-4);
  EXPECT_EQ(c.rate_at(25), 2.5e-4);
  EXPECT_EQ(c.rate_at(49), 6.25e-5);
}

TEST(TrainConfigJson, RoundTripAndValidation) {
  TrainConfig c;
  c.epochs = 7;
  c.seed = 99;
  const auto back = train_config_from_json(train_config_to_json(c));
  EXPECT_EQ(train_config_to_json(back), train_config_to_json(c));
  EXPECT_THROW(train_config_from_json({{"rate", -1.0}}), Error);
  EXPECT_THROW(train_config_from_json({{"loss", "l1"}}), Error);
  EXPECT_THROW(train_config_from_json({{"batch", 0}}), Error);
}

TEST(TrainLoop, ZeroEpochsReturnsTheInitialModel) {
  const auto g = make_unit_square(8);
  const auto m = init_model(ModelConfig::uniform(1, 1, 4, 1, small_block()), 1);
  const auto ctx = prepare_context(m, g);
  const auto data = smooth_pairs(g, 4, 2);
  TrainConfig c;
  c.epochs = 0;
  const auto r = train_loop(m, ctx, data, {}, c);
  EXPECT_EQ(flatten_params(r.model), flatten_params(m));
  EXPECT_TRUE(r.history.empty());
}

TEST(TrainLoop, OverfitsAFewSamples) {
  const auto g = make_unit_square(8);
  const auto m = init_model(ModelConfig::uniform(1, 1, 32, 2, small_block()), 3);
  const auto ctx = prepare_context(m, g);
  auto data = smooth_pairs(g, 4, 4);
  for (std::size_t i = 0; i < data.target.size(); ++i) data.target.values()[i] = 1.0 + 2.0 * data.input.values()[i];
  TrainConfig c;
  c.rate = 5e-3;
  c.interval = 1000;
  c.epochs = 500;
  c.batch = 2;
  const auto r = train_loop(m, ctx, data, data, c);
  EXPECT_LT(r.history.back().val_rel_l2, 1e-2);
  EXPECT_LT(r.final_train_loss, r.initial_train_loss);
}

TEST(TrainLoop, FixedSeedIsBitwiseReproducible) {
  const auto g = make_unit_square(8);
  BlockConfig b;
  b.modes = 3;
  b.differential = true;
  const auto m = init_model(ModelConfig::uniform(1, 1, 4, 2, b), 5);
  const auto ctx = prepare_context(m, g);
  const auto data = smooth_pairs(g, 10, 6);
  TrainConfig c;
  c.rate = 1e-2;
  c.epochs = 4;
  c.batch = 3;
  c.seed = 17;
  const auto a = train_loop(m, ctx, data, data, c);
  const auto b2 = train_loop(m, ctx, data, data, c);
  EXPECT_EQ(history_csv(a.history), history_csv(b2.history));
  EXPECT_EQ(flatten_params(a.model), flatten_params(b2.model));
  c.seed = 18;
  const auto d = train_loop(m, ctx, data, data, c);
  EXPECT_NE(flatten_params(a.model), flatten_params(d.model));
}

TEST(TrainLoop, HooksSeeEveryEpoch) {
  const auto g = make_unit_square(8);
  const auto m = init_model(ModelConfig::uniform(1, 1, 4, 1, small_block()), 7);
  const auto ctx = prepare_context(m, g);
  const auto data = smooth_pairs(g, 5, 8);
  TrainConfig c;
  c.epochs = 3;
  c.batch = 2;
  std::vector<std::size_t> seen;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r, const LocalNOModel&) { seen.push_back(r.epoch); };
  train_loop(m, ctx, data, {}, c, hooks);
  EXPECT_EQ(seen, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(TrainLoop, DivergenceWritesLastGoodCheckpoint) {
  const auto g = make_unit_square(8);
  const auto m = init_model(ModelConfig::uniform(1, 1, 4, 1, small_block()), 9);
  const auto ctx = prepare_context(m, g);
  auto data = smooth_pairs(g, 4, 10);
  data.target(2, 0, 5) = std::nan("");
  TrainConfig c;
  c.epochs = 2;
  c.batch = 4;
  TrainHooks hooks;
  hooks.last_good_checkpoint = testutil::temp_path("last_good.ckpt");
  std::filesystem::remove(*hooks.last_good_checkpoint);
  try {
    train_loop(m, ctx, data, {}, c, hooks);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Diverged);
  }
  EXPECT_EQ(flatten_params(read_checkpoint(*hooks.last_good_checkpoint)), flatten_params(m));
}

TEST(HistoryCsv, HeaderAndRoundTripPrecision) {
  std::vector<EpochRecord> h{{0, 1e-3, 0.1 + 0.2, 1.0 / 3.0}, {1, 5e-4, 2.5, 0.125}};
  const auto csv = history_csv(h);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "epoch,lr,train_loss,val_rel_l2");
  std::getline(in, line);
  std::size_t e;
  double lr, tl, vl;
  ASSERT_EQ(std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf", &e, &lr, &tl, &vl), 4);
  EXPECT_EQ(tl, 0.1 + 0.2);
  EXPECT_EQ(vl, 1.0 / 3.0);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}
