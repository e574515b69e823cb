#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "localno/data.hpp"
#include "test_util.hpp"

using namespace localno;
using std::numbers::pi;

namespace {

// Fourth-order central difference along one axis of a row-major n x n array;
// valid for indices at least two away from the edges.
double d4(const std::vector<double>& v, std::size_t n, std::size_t r, std::size_t c, int axis, double h) {
  auto at = [&](long dr, long dc) { return v[(r + dr) * n + (c + dc)]; };
  const long a = axis == 0 ? 1 : 0, b = axis == 0 ? 0 : 1;
  return (-at(2 * a, 2 * b) + 8 * at(a, b) - 8 * at(-a, -b) + at(-2 * a, -2 * b)) / (12 * h);
}

// -div(a grad u) from point values of u alone.
std::vector<double> fd_forcing(const Grid& g, const Field& u) {
  const std::size_t n = g.shape()[0];
  const double h = g.spacing()[0];
  std::vector<double> uv(u.values().begin(), u.values().end());
  std::vector<double> F1(n * n, 0.0), F2(n * n, 0.0), f(n * n, 0.0);
  for (std::size_t r = 2; r + 2 < n; ++r)
    for (std::size_t c = 2; c + 2 < n; ++c) {
      const double x = g.coord(r * n + c, 0), y = g.coord(r * n + c, 1);
      const double u1 = d4(uv, n, r, c, 0, h), u2 = d4(uv, n, r, c, 1, h);
      F1[r * n + c] = x * x * u1 + std::sin(x * y) * u2;
      F2[r * n + c] = (x + y) * u1 + y * u2;
    }
  for (std::size_t r = 4; r + 4 < n; ++r)
    for (std::size_t c = 4; c + 4 < n; ++c) f[r * n + c] = -(d4(F1, n, r, c, 0, h) + d4(F2, n, r, c, 1, h));
  return f;
}

}  // namespace

TEST(Darcy, ZeroCoefficientsGiveZeroFields) {
  const auto g = make_unit_square(17);
  const auto s = darcy_from_coefficients(g, std::vector<double>(400, 0.0));
  EXPECT_EQ(testutil::max_abs(s.u.values()), 0.0);
  EXPECT_EQ(testutil::max_abs(s.f.values()), 0.0);
}

TEST(Darcy, SingleModeMatchesHandDerivation) {
  const auto g = make_unit_square(13);
  std::vector<double> c(400, 0.0);
  c[0] = 1.0;
  const auto s = darcy_from_coefficients(g, c);
  const double A = 1.0 / (pi * std::sqrt(2.0));
  for (std::size_t p = 0; p < g.size(); ++p) {
    const double x = g.coord(p, 0), y = g.coord(p, 1);
    const double sx = std::sin(pi * x), sy = std::sin(pi * y), cx = std::cos(pi * x), cy = std::cos(pi * y);
    const double u = A * sx * sy;
    const double ux = A * pi * cx * sy, uy = A * pi * sx * cy;
    const double uxx = -pi * pi * u, uyy = -pi * pi * u, uxy = A * pi * pi * cx * cy;
    // a = [[x^2, sin(xy)], [x + y, y]]
    const double f = -(2 * x * ux + x * x * uxx + y * std::cos(x * y) * uy + std::sin(x * y) * uxy + ux +
                       (x + y) * uxy + uy + y * uyy);
    EXPECT_NEAR(s.u(0, 0, p), u, 1e-14);
    EXPECT_NEAR(s.f(0, 0, p), f, 1e-12);
  }
}

TEST(Darcy, BoundaryValuesVanish) {
  const auto g = make_unit_square(64);
  for (std::uint64_t seed : {0ull, 1ull, 77ull}) {
    const auto s = gen_darcy(g, seed);
    double worst = 0.0;
    for (std::size_t r = 0; r < 64; ++r)
      for (std::size_t c = 0; c < 64; ++c)
        if (r == 0 || c == 0 || r == 63 || c == 63) worst = std::max(worst, std::abs(s.u(0, 0, r * 64 + c)));
    EXPECT_LE(worst, 1e-12);
    for (double v : s.f.values()) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST(Darcy, NestedGridsAgreeExactly) {
  const auto coarse = make_unit_square(33), fine = make_unit_square(65);
  for (std::uint64_t seed : {3ull, 4ull}) {
    const auto a = gen_darcy(coarse, seed), b = gen_darcy(fine, seed);
    for (std::size_t r = 0; r < 33; ++r)
      for (std::size_t c = 0; c < 33; ++c) {
        ASSERT_EQ(a.u(0, 0, r * 33 + c), b.u(0, 0, 2 * r * 65 + 2 * c));
        ASSERT_EQ(a.f(0, 0, r * 33 + c), b.f(0, 0, 2 * r * 65 + 2 * c));
      }
  }
}

TEST(Darcy, AnalyticForcingMatchesFiniteDifferences) {
  const auto g = make_unit_square(1024);
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = gen_darcy(g, 500 + seed);
    const auto f = fd_forcing(g, s.u);
    double num = 0.0, den = 0.0;
    for (std::size_t r = 4; r + 4 < 1024; ++r)
      for (std::size_t c = 4; c + 4 < 1024; ++c) {
        const double e = s.f(0, 0, r * 1024 + c);
        num += (e - f[r * 1024 + c]) * (e - f[r * 1024 + c]);
        den += e * e;
      }
    worst = std::max(worst, std::sqrt(num / den));
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(Darcy, CoefficientsAreSeededAndScaled) {
  EXPECT_EQ(darcy_coefficients(5), darcy_coefficients(5));
  EXPECT_NE(darcy_coefficients(5), darcy_coefficients(6));
  // variance 1/(i+j): pool many seeds for the (1,1) and (20,20) entries
  double s11 = 0.0, s2020 = 0.0;
  const int n = 4000;
  for (int k = 0; k < n; ++k) {
    const auto c = darcy_coefficients(static_cast<std::uint64_t>(k));
    s11 += c[0] * c[0];
    s2020 += c[399] * c[399];
  }
  EXPECT_NEAR(s11 / n, 0.5, 0.05);
  EXPECT_NEAR(s2020 / n, 1.0 / 40.0, 0.0025);
}

TEST(Darcy, RejectsOtherDomains) {
  EXPECT_THROW(gen_darcy(make_regular_grid({8, 8}, {2.0, 1.0}, false), 0), Error);
  EXPECT_THROW(gen_darcy(make_unit_square(8, true), 0), Error);
  EXPECT_THROW(gen_darcy(make_equiangular_sphere_grid(4, 8), 0), Error);
}

TEST(Parabola, ZeroCoefficientsGiveZeroInputAndTarget) {
  const auto g = make_unit_square(9);
  ParabolaSpec spec{{0.0, 0.0}, 1.0};
  const auto t = gen_parabola(g, spec);
  EXPECT_EQ(testutil::max_abs(t.input.values()), 0.0);
  DirectionalSignature sig(1, 2, 2);
  sig.dir(0, 0, 0) = 0.3;
  sig.dir(0, 1, 1) = -1.0;
  sig.coef(0, 1) = 2.0;
  EXPECT_EQ(testutil::max_abs(t.target(sig).values()), 0.0);
}

TEST(Parabola, UnitDirectionGivesTwiceTheCoordinate) {
  const auto g = make_unit_square(11);
  const auto t = gen_parabola(g, ParabolaSpec{{1.0}, 1.0});
  DirectionalSignature sig(1, 1, 2);
  sig.dir(0, 0, 0) = 1.0;
  const auto y = t.target(sig);
  for (std::size_t p = 0; p < g.size(); ++p) {
    const double x0 = g.coord(p, 0), x1 = g.coord(p, 1);
    EXPECT_NEAR(t.input(0, 0, p), x0 * x0 + x1 * x1, 1e-15);
    EXPECT_NEAR(y(0, 0, p), 2.0 * x0, 1e-15);
  }
}

TEST(Parabola, ScaleMultipliesEveryChannel) {
  const auto g = make_unit_square(7);
  const auto a = ParabolaSpec::uniform(10, 1.0, 9), b = ParabolaSpec::uniform(10, 4.0, 9);
  EXPECT_EQ(a.coefficients, b.coefficients);
  const auto ta = gen_parabola(g, a), tb = gen_parabola(g, b);
  for (std::size_t i = 0; i < ta.input.size(); ++i) EXPECT_NEAR(tb.input.values()[i], 4.0 * ta.input.values()[i], 1e-14);
  for (double c : a.coefficients) {
    EXPECT_GE(c, 0.0);
    EXPECT_LT(c, 1.0);
  }
}

TEST(Parabola, TargetOutlivesTheGrid) {
  ParabolaTask t;
  {
    const auto g = make_unit_square(5);
    t = gen_parabola(g, ParabolaSpec{{2.0}, 1.0});
  }
  DirectionalSignature sig(1, 1, 2);
  sig.dir(0, 0, 1) = 1.0;
  const auto y = t.target(sig);
  EXPECT_NEAR(y(0, 0, 5 * 5 - 1), 2.0 * 2.0 * 1.0, 1e-15);
}

TEST(DatasetIo, RoundTripIsBitwise) {
  const auto g = make_unit_square(16);
  auto ds = gen_darcy_dataset(g, 3, split_seed(40, "test"), "test");
  ds.extra = {{"note", 1}};
  const auto path = testutil::temp_path("darcy_rt.lnd");
  write_dataset(ds, path);
  const auto back = read_dataset(path);
  EXPECT_EQ(back.input, ds.input);
  EXPECT_EQ(back.target, ds.target);
  EXPECT_EQ(back.seed, 40 + kTestSeedOffset);
  EXPECT_EQ(back.split, "test");
  EXPECT_EQ(back.task, "darcy");
  EXPECT_EQ(back.grid.shape(), g.shape());
  EXPECT_EQ(back.extra, ds.extra);
  EXPECT_EQ(back.input_channels, ds.input_channels);
}

TEST(DatasetIo, SamplesFollowTheirSeeds) {
  const auto g = make_unit_square(8);
  const auto ds = gen_darcy_dataset(g, 4, 10);
  const auto s = gen_darcy(g, 12);
  EXPECT_TRUE(std::equal(s.u.values().begin(), s.u.values().end(), ds.input.sample(2).begin()));
  EXPECT_TRUE(std::equal(s.f.values().begin(), s.f.values().end(), ds.target.sample(2).begin()));
}

TEST(DatasetIo, TruncatedFileIsIncompatible) {
  const auto path = testutil::temp_path("darcy_trunc.lnd");
  write_dataset(gen_darcy_dataset(make_unit_square(8), 2, 0), path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  try {
    read_dataset(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IncompatibleDataset);
  }
}

TEST(DatasetIo, WrongMagicIsIncompatible) {
  const auto path = testutil::temp_path("not_a_dataset.lnd");
  std::ofstream(path) << "hello world, definitely not a dataset";
  try {
    read_dataset(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IncompatibleDataset);
  }
}

TEST(DatasetIo, PayloadSizeArithmetic) {
  const auto path = testutil::temp_path("darcy_100.lnd");
  write_dataset(gen_darcy_dataset(make_unit_square(64), 100, 0), path);
  std::ifstream is;
  const auto h = io::open_container(is, path, kDatasetMagic);
  const auto header_bytes = static_cast<std::uint64_t>(is.tellg());
  EXPECT_EQ(h.at("count"), 100);
  EXPECT_EQ(std::filesystem::file_size(path), header_bytes + 100ull * 2 * 64 * 64 * 8);
}
