#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "thermochaos/kernel.hpp"

using namespace thermochaos;

namespace {

constexpr double kPi = std::numbers::pi;

template <class F>
double simpson(F&& f, double a, double b, int panels) {
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

// Piecewise-linear raw table, symmetrized, evaluated independently of Kernel.
struct RawTable {
  std::vector<double> x, y;
  double raw(double t) const {
    if (t < x.front() || t > x.back()) return 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) {
      if (t <= x[i]) return y[i - 1] + (y[i] - y[i - 1]) * (t - x[i - 1]) / (x[i] - x[i - 1]);
    }
    return y.back();
  }
  double operator()(double t) const { return 0.5 * (raw(t) + raw(-t)); }
};

const RawTable kPeaked{{-1.0, -0.5, 0.0, 0.5, 1.0}, {2.0, 1.0, 0.5, 1.0, 2.0}};

Kernel peaked(int d) { return Kernel::table(Dim(d), kPeaked.x, kPeaked.y); }

double sphere_factor(int d) { return d == 2 ? 2.0 : 2.0 * kPi; }
double sin_pow(double th, int d) { return d == 2 ? 1.0 : std::sin(th); }

Vec3 random_unit(RandomStream& r, int d) {
  if (d == 1) return Vec3{r.uniform() < 0.5 ? -1.0 : 1.0};
  Vec3 z;
  for (int k = 0; k < d; ++k) z[k] = r.normal();
  return z / norm(z);
}

}  // namespace

TEST(RhoK, OneDimensionIsExactlyOne) {
  EXPECT_EQ(rho_k(Kernel::uniform(Dim(1))), 1.0);
  EXPECT_EQ(rho_k(Kernel::table(Dim(1), {-1.0, 1.0}, {3.0, 1.0})), 1.0);
}

TEST(RhoK, UniformKernelAnalyticValues) {
  EXPECT_NEAR(rho_k(Kernel::uniform(Dim(2))), 1.0, 1e-9);
  EXPECT_NEAR(rho_k(Kernel::uniform(Dim(3))), 2.0 / 3.0, 1e-9);
}

TEST(RhoK, UniformKernelAgainstSimpson) {
  const double o2 = 2.0 * 2.0 * simpson([](double t) { return std::cos(t) * std::cos(t) / (2 * kPi); }, 0, kPi, 2000);
  const double o3 = 2.0 * 2.0 * kPi *
                    simpson([](double t) { return std::cos(t) * std::cos(t) * std::sin(t) / (4 * kPi); }, 0, kPi, 2000);
  EXPECT_NEAR(rho_k(Kernel::uniform(Dim(2))), o2, 1e-9);
  EXPECT_NEAR(rho_k(Kernel::uniform(Dim(3))), o3, 1e-9);
}

TEST(RhoK, TableKernelAgainstSimpson) {
  for (int d : {2, 3}) {
    auto mass = [&](double t) { return kPeaked(std::cos(t)) * sin_pow(t, d); };
    auto second = [&](double t) { return kPeaked(std::cos(t)) * std::cos(t) * std::cos(t) * sin_pow(t, d); };
    const double z = sphere_factor(d) * simpson(mass, 0, kPi, 400000);
    const double oracle = 2.0 * sphere_factor(d) * simpson(second, 0, kPi, 400000) / z;
    EXPECT_NEAR(rho_k(peaked(d)), oracle, 1e-8) << "d=" << d;
  }
}

TEST(Kernel, NormalizedEvenNonnegative) {
  for (int d : {1, 2, 3}) {
    for (const Kernel& k : {Kernel::uniform(Dim(d)), peaked(d)}) {
      EXPECT_NEAR(k.sphere_integral(), 1.0, 1e-10);
      for (int i = 0; i <= 200; ++i) {
        const double x = -1.0 + i / 100.0;
        EXPECT_GE(k(x), 0.0);
        EXPECT_DOUBLE_EQ(k(x), k(-x));
      }
    }
  }
}

TEST(Kernel, UniformDensityValues) {
  EXPECT_NEAR(Kernel::uniform(Dim(2))(0.3), 1.0 / (2 * kPi), 1e-14);
  EXPECT_NEAR(Kernel::uniform(Dim(3))(0.3), 1.0 / (4 * kPi), 1e-14);
  EXPECT_NEAR(Kernel::uniform(Dim(1))(1.0), 0.5, 1e-15);
}

TEST(Kernel, CdfStrictlyIncreasingWhereDensityPositive) {
  for (int d : {2, 3}) {
    const Kernel k = peaked(d);
    const auto& t = k.cdf_table();
    for (std::size_t i = 1; i < t.cdf.size(); ++i) {
      const double mid = 0.5 * (t.theta[i - 1] + t.theta[i]);
      if (k.theta_density(mid) > 0.0) {
        ASSERT_GT(t.cdf[i], t.cdf[i - 1]) << "cell " << i;
      }
    }
    EXPECT_EQ(t.cdf.front(), 0.0);
    EXPECT_EQ(t.cdf.back(), 1.0);
  }
}

TEST(Kernel, CdfMatchesIndependentQuadrature) {
  for (int d : {2, 3}) {
    const Kernel k = peaked(d);
    auto dens = [&](double t) { return kPeaked(std::cos(t)) * sin_pow(t, d); };
    const double z = simpson(dens, 0, kPi, 200000);
    for (double th : {0.1, 0.7, 1.0, 1.5, 2.2, 3.0}) {
      const double oracle = simpson(dens, 0, th, 200000) / z;
      EXPECT_NEAR(k.cdf_table().evaluate(th), oracle, 1e-6) << "d=" << d << " theta=" << th;
    }
  }
}

TEST(Kernel, TableErrorsNameTheNode) {
  try {
    Kernel::table(Dim(2), {-1.0, 0.0, 1.0}, {1.0, -0.5, 1.0});
    FAIL() << "negative value accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::normalization);
    EXPECT_NE(std::string(e.what()).find("node 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(Kernel::table(Dim(2), {-1.0, 1.0}, {0.0, 0.0}), Error);
  EXPECT_THROW(Kernel::table(Dim(2), {0.5, 0.2}, {1.0, 1.0}), Error);
  EXPECT_THROW(Kernel::table(Dim(3), {-1.5, 1.0}, {1.0, 1.0}), Error);
  EXPECT_THROW(Kernel::uniform(Dim(1)).cdf_table(), Error);
}

TEST(Sampling, UniformKernelIsUniformOnSphere) {
  const double critical = boost::math::quantile(boost::math::chi_squared(19), 0.99);
  for (int d : {2, 3}) {
    const Kernel k = Kernel::uniform(Dim(d));
    RandomStream rng(100 + d, Purpose::test);
    const UnitVector v_hat(Vec3{1.0, 2.0, 3.0}, Dim(d));
    std::vector<double> counts(20, 0.0);
    const int n = 100000;
    for (int s = 0; s < n; ++s) {
      const UnitVector nh = sample_direction(k, v_hat, rng);
      ASSERT_NEAR(norm(nh.vec()), 1.0, 1e-12);
      // equal-area bands: angle sectors in d = 2, latitude bands in d = 3
      const double x = d == 2 ? (std::atan2(nh[1], nh[0]) + kPi) / (2 * kPi) : 0.5 * (nh[2] + 1.0);
      counts[std::min<std::size_t>(19, static_cast<std::size_t>(x * 20))] += 1;
    }
    double chi2 = 0;
    for (double c : counts) chi2 += (c - n / 20.0) * (c - n / 20.0) / (n / 20.0);
    EXPECT_LT(chi2, critical) << "d=" << d;
  }
}

TEST(Sampling, PolarLawMatchesCdfTable) {
  for (int d : {2, 3}) {
    const Kernel k = peaked(d);
    RandomStream rng(200 + d, Purpose::test);
    Vec3 e;
    e[d - 1] = 1.0;
    const UnitVector v_hat(e, Dim(d));
    std::vector<double> xs(100000);
    for (auto& x : xs) x = dot(sample_direction(k, v_hat, rng).vec(), e);
    std::sort(xs.begin(), xs.end());
    double D = 0;
    const double n = static_cast<double>(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double F = 1.0 - k.cdf_table().evaluate(std::acos(std::clamp(xs[i], -1.0, 1.0)));
      D = std::max({D, std::abs(F - i / n), std::abs(F - (i + 1) / n)});
    }
    EXPECT_LT(D, 0.01) << "d=" << d;
  }
}

TEST(Sampling, NarrowBandStaysInSupport) {
  for (int d : {2, 3}) {
    const Kernel k = Kernel::table(Dim(d), {-0.05, -0.045, 0.045, 0.05}, {0.0, 1.0, 1.0, 0.0});
    RandomStream rng(300 + d, Purpose::test);
    const UnitVector v_hat(Vec3{0.3, -0.2, 0.9}, Dim(d));
    for (int s = 0; s < 20000; ++s) {
      ASSERT_LT(std::abs(dot(sample_direction(k, v_hat, rng).vec(), v_hat.vec())), 0.05 + 1e-9);
    }
  }
}

TEST(Reflect, Examples) {
  const Vec3 a = reflect(Vec3{1.0, 0.0}, UnitVector(Vec3{1.0, 0.0}, Dim(2)));
  EXPECT_EQ(a, (Vec3{-1.0, 0.0}));
  const Vec3 b = reflect(Vec3{3.0, 4.0}, UnitVector(Vec3{0.0, 1.0}, Dim(2)));
  EXPECT_EQ(b, (Vec3{3.0, -4.0}));
  EXPECT_EQ(reflect(Vec3{2.5}, UnitVector(Vec3{1.0}, Dim(1)))[0], -2.5);
  EXPECT_EQ(collide_1d(2.5, 0.1), -2.5);
  EXPECT_EQ(collide_1d(2.5, 0.9), 2.5);
}

TEST(Reflect, PreservesSpeedAndIsInvolution) {
  RandomStream rng(400, Purpose::test);
  for (int d : {1, 2, 3}) {
    for (int s = 0; s < 10000; ++s) {
      Vec3 v = 3.0 * rng.normal() * random_unit(rng, d);
      const UnitVector n(random_unit(rng, d), Dim(d));
      const Vec3 r = reflect(v, n);
      ASSERT_NEAR(norm(r), norm(v), 1e-12 * std::max(1.0, norm(v)));
      ASSERT_LT(norm(reflect(r, n) - v), 1e-12 * std::max(1.0, norm(v)));
    }
  }
}

TEST(MatchCollision, Examples) {
  const Dim d1(1), d2(2), d3(3);
  EXPECT_EQ(match_collision(UnitVector(Vec3{1.0}, d1), UnitVector(Vec3{-1.0}, d1), UnitVector(Vec3{-1.0}, d1)).vec(),
            (Vec3{1.0}));

  const UnitVector a(Vec3{1, 0}, d2), ap(Vec3{0, 1}, d2), b(Vec3{0, 1}, d2);
  const UnitVector bp = match_collision(a, ap, b);
  EXPECT_NEAR(bp[0], -1.0, 1e-15);
  EXPECT_NEAR(bp[1], 0.0, 1e-15);
  EXPECT_NEAR(dot(a.vec(), ap.vec()), dot(b.vec(), bp.vec()), 1e-15);
  EXPECT_NEAR(dot(a.vec(), b.vec()), dot(ap.vec(), bp.vec()), 1e-15);

  const UnitVector x(Vec3{1, 0, 0}, d3), xp(Vec3{0, 0, 1}, d3), y(Vec3{0, 1, 0}, d3);
  const UnitVector yp = match_collision(x, xp, y);
  EXPECT_NEAR(std::abs(yp[0]), 1.0, 1e-15);
  EXPECT_NEAR(yp[1], 0.0, 1e-15);
  EXPECT_NEAR(yp[2], 0.0, 1e-15);
  EXPECT_EQ(dot(x.vec(), xp.vec()), dot(y.vec(), yp.vec()));
  EXPECT_EQ(dot(x.vec(), y.vec()), dot(xp.vec(), yp.vec()));
  // deterministic sign
  EXPECT_EQ(match_collision(x, xp, y).vec(), yp.vec());
}

TEST(MatchCollision, IdentitiesOnRandomTriples) {
  RandomStream rng(500, Purpose::test);
  for (int d : {1, 2, 3}) {
    double worst = 0;
    for (int s = 0; s < 10000; ++s) {
      const UnitVector a(random_unit(rng, d), Dim(d)), ap(random_unit(rng, d), Dim(d)), b(random_unit(rng, d), Dim(d));
      const UnitVector bp = match_collision(a, ap, b);
      worst = std::max({worst, std::abs(dot(a.vec(), ap.vec()) - dot(b.vec(), bp.vec())),
                        std::abs(dot(a.vec(), b.vec()) - dot(ap.vec(), bp.vec()))});
    }
    EXPECT_LT(worst, 1e-10) << "d=" << d;
  }
}

TEST(MatchCollision, PreservesPairDistance) {
  RandomStream rng(600, Purpose::test);
  for (int d : {1, 2, 3}) {
    const Kernel k = Kernel::uniform(Dim(d));
    for (int s = 0; s < 10000; ++s) {
      const double speed = 0.1 + 2.0 * rng.uniform();
      const Vec3 v = speed * random_unit(rng, d);
      const Vec3 w = speed * random_unit(rng, d);
      const Vec3 vp = d == 1 ? Vec3{-v[0]} : reflect(v, UnitVector(random_unit(rng, d), Dim(d)));
      const Vec3 wp = speed * match_collision(UnitVector(v, Dim(d)), UnitVector(vp, Dim(d)), UnitVector(w, Dim(d))).vec();
      ASSERT_NEAR(norm(wp - vp), norm(w - v), 1e-9) << "d=" << d;
    }
  }
}

TEST(CollisionNormal, Examples) {
  const auto n1 = collision_normal(Vec3{1, 0}, Vec3{-1, 0}, Dim(2));
  ASSERT_TRUE(n1);
  EXPECT_EQ(n1->vec(), (Vec3{1, 0}));
  const auto n2 = collision_normal(Vec3{3, 4}, Vec3{3, -4}, Dim(2));
  ASSERT_TRUE(n2);
  EXPECT_EQ(n2->vec(), (Vec3{0, 1}));
  const Vec3 w{1, 0, 0}, wp{0, 1, 0};
  const auto n3 = collision_normal(w, wp, Dim(3));
  ASSERT_TRUE(n3);
  EXPECT_NEAR(n3->vec()[0], 1 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(n3->vec()[1], -1 / std::sqrt(2.0), 1e-15);
  EXPECT_LT(norm(reflect(w, *n3) - wp), 1e-15);
  EXPECT_FALSE(collision_normal(w, w, Dim(3)));
  EXPECT_THROW(collision_normal(Vec3{1, 0}, Vec3{2, 0}, Dim(2)), Error);
}

TEST(CollisionNormal, RoundTripOnRandomReflections) {
  RandomStream rng(700, Purpose::test);
  for (int s = 0; s < 1000; ++s) {
    const Vec3 w = random_unit(rng, 3) * 1.7;
    const UnitVector n(random_unit(rng, 3), Dim(3));
    const Vec3 wp = reflect(w, n);
    const auto back = collision_normal(w, wp, Dim(3));
    if (!back) continue;
    EXPECT_LT(norm(reflect(w, *back) - wp), 1e-12);
  }
}
