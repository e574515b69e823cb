#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "localno/basis.hpp"
#include "localno/rng.hpp"

using namespace localno;
using std::numbers::pi;

TEST(HatBasis, OneHotAtCollocationNodes) {
  const auto b = HatBasis1D::equidistant(5, 0.1, 0.0);
  ASSERT_EQ(b.size(), 5u);
  for (std::size_t k = 0; k < 5; ++k) {
    const auto v = b.eval(b.collocation(k));
    for (std::size_t l = 0; l < 5; ++l) EXPECT_EQ(v[l], l == k ? 1.0 : 0.0);
  }
}

TEST(HatBasis, SecondNodeIsSecondUnitVector) {
  const HatBasis1D b({-1.0, 0.0, 0.5, 1.2, 2.0});
  const auto v = b.eval(0.5);
  EXPECT_EQ(v, (std::vector<double>{0.0, 1.0, 0.0}));
}

TEST(HatBasis, ZeroBeyondCutoff) {
  const auto b = HatBasis1D::equidistant(4, 0.25, 0.0);
  for (double x : {b.cutoff(), b.cutoff() + 0.01, 10.0, b.lower(), -3.0}) {
    for (double v : b.eval(x)) EXPECT_EQ(v, 0.0) << x;
  }
}

TEST(HatBasis, MidpointSplitsEvenly) {
  const auto b = HatBasis1D::equidistant(4, 0.25, 0.0);
  const auto v = b.eval(0.125);
  EXPECT_DOUBLE_EQ(v[0], 0.5);
  EXPECT_DOUBLE_EQ(v[1], 0.5);
  EXPECT_EQ(v[2], 0.0);
  EXPECT_EQ(v[3], 0.0);
}

TEST(HatBasis, PartitionOfUnityBetweenOuterCollocationPoints) {
  const HatBasis1D b({-0.3, 0.0, 0.2, 0.25, 0.7, 1.0});
  Rng rng(1);
  for (int t = 0; t < 1000; ++t) {
    const double x = rng.uniform(0.0, 0.7);
    double s = 0.0;
    for (double v : b.eval(x)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-14);
  }
}

TEST(HatBasis, SupportOfEachFunctionIsBetweenNeighbouringNodes) {
  const HatBasis1D b({-0.3, 0.0, 0.2, 0.25, 0.7, 1.0});
  Rng rng(2);
  for (int t = 0; t < 2000; ++t) {
    const double x = rng.uniform(-0.5, 1.2);
    const auto v = b.eval(x);
    for (std::size_t l = 0; l < b.size(); ++l)
      if (v[l] != 0.0) {
        EXPECT_GE(x, b.nodes()[l]);
        EXPECT_LE(x, b.nodes()[l + 2]);
      }
  }
}

TEST(HatBasis, LipschitzBound) {
  const HatBasis1D b({-0.3, 0.0, 0.2, 0.25, 0.7, 1.0});
  const double lip = 1.0 / b.min_spacing();
  const double eps = 1e-7;
  for (double x = -0.4; x < 1.1; x += 0.0013) {
    const auto a = b.eval(x), c = b.eval(x + eps);
    for (std::size_t l = 0; l < b.size(); ++l) EXPECT_LE(std::abs(c[l] - a[l]), lip * eps * (1 + 1e-9));
  }
}

TEST(HatBasis, RejectsNonIncreasingNodes) {
  EXPECT_THROW(HatBasis1D({0.0, 1.0}), Error);
  EXPECT_THROW(HatBasis1D({0.0, 1.0, 1.0}), Error);
  EXPECT_THROW(HatBasis1D::equidistant(0, 1.0), Error);
}

TEST(RadialBasis, CentreAtOrigin) {
  const auto b = default_planar_basis();
  const auto v = b.eval(0.0, 1.3);
  EXPECT_EQ(v[0], 1.0);
  for (std::size_t l = 1; l < v.size(); ++l) EXPECT_EQ(v[l], 0.0);
}

TEST(RadialBasis, ZeroAtAndBeyondCutoff) {
  const RadialAnisotropicBasis b(0.5, 2, 6);
  for (double phi : {0.0, 1.0, 5.0})
    for (double r : {0.5, 0.5000001, 2.0}) {
      for (double v : b.eval(r, phi)) EXPECT_EQ(v, 0.0);
    }
}

TEST(RadialBasis, OneHotOnRingCollocation) {
  const RadialAnisotropicBasis b(1.0, 3, 5);
  const double dr = b.ring_spacing();
  for (std::size_t ring = 1; ring <= 3; ++ring)
    for (std::size_t a = 0; a < 5; ++a) {
      const auto v = b.eval(static_cast<double>(ring) * dr, static_cast<double>(a) * 2 * pi / 5);
      for (std::size_t l = 0; l < b.size(); ++l) EXPECT_NEAR(v[l], l == b.index(ring, a) ? 1.0 : 0.0, 1e-14);
    }
}

TEST(RadialBasis, AzimuthalHatsWrapPeriodically) {
  const RadialAnisotropicBasis b(1.0, 1, 4);
  const double r = b.ring_spacing();
  // halfway between the last collocation (3pi/2) and 2pi == 0
  const auto v = b.eval(r, 7 * pi / 4);
  EXPECT_NEAR(v[b.index(1, 3)], 0.5, 1e-14);
  EXPECT_NEAR(v[b.index(1, 0)], 0.5, 1e-14);
  const auto w = b.eval(r, 7 * pi / 4 - 2 * pi);
  for (std::size_t l = 0; l < b.size(); ++l) EXPECT_NEAR(v[l], w[l], 1e-14);
}

TEST(RadialBasis, CentreFunctionIsIsotropic) {
  const RadialAnisotropicBasis b(1.0, 2, 7);
  for (double r : {0.0, 0.1, 0.2, 0.3, 0.6})
    EXPECT_EQ(b.eval(r, 0.3)[0], b.eval(r, 4.1)[0]);
}

TEST(RadialBasis, PartitionOfUnityInsideOuterRing) {
  const RadialAnisotropicBasis b(1.0, 2, 6);
  Rng rng(5);
  for (int t = 0; t < 1000; ++t) {
    const double r = rng.uniform(0.0, 2.0 * b.ring_spacing());
    double s = 0.0;
    for (double v : b.eval(r, rng.uniform(0, 2 * pi))) s += v;
    EXPECT_NEAR(s, 1.0, 1e-13);
  }
}

TEST(RadialBasis, LipschitzBound) {
  const RadialAnisotropicBasis b(1.0, 2, 6);
  const double lip = 1.0 / b.min_spacing();
  Rng rng(6);
  const double eps = 1e-7;
  for (int t = 0; t < 2000; ++t) {
    const double r = rng.uniform(0.0, 1.1), p = rng.uniform(0, 2 * pi);
    const auto a = b.eval(r, p), c = b.eval(r + eps, p), d = b.eval(r, p + eps);
    for (std::size_t l = 0; l < b.size(); ++l) {
      EXPECT_LE(std::abs(c[l] - a[l]), lip * eps * (1 + 1e-6));
      EXPECT_LE(std::abs(d[l] - a[l]), lip * eps * (1 + 1e-6));
    }
  }
}

TEST(DefaultBases, LayoutsAndCutoffs) {
  EXPECT_EQ(default_planar_basis().size(), 5u);
  EXPECT_DOUBLE_EQ(default_planar_basis().cutoff(), 0.007);
  EXPECT_DOUBLE_EQ(default_torus_basis().cutoff(), 0.05 * pi);
  EXPECT_DOUBLE_EQ(default_sphere_basis().cutoff(), 0.1 * pi);
  EXPECT_EQ(default_sphere_basis().size(), 5u);
}

TEST(BasisJson, RoundTrip) {
  const KernelBasis a = RadialAnisotropicBasis(0.3, 2, 3);
  const KernelBasis b = HatBasis1D::equidistant(3, 0.5);
  EXPECT_EQ(basis_from_json(basis_to_json(a)), a);
  EXPECT_EQ(basis_from_json(basis_to_json(b)), b);
  EXPECT_THROW(basis_from_json({{"kind", "zernike"}}), Error);
}
