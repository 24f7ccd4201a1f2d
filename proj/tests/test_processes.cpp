#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "thermochaos/parallel.hpp"
#include "thermochaos/processes.hpp"

using namespace thermochaos;

namespace {

CurrentSolution current_for(const Ensemble& e, const Kernel& k, const Vec3& E, double horizon) {
  const CurrentParams p{E, energy_of(e.v), rho_k(k), e.d};
  return solve_current(p, current_of(e.v), horizon);
}

Vec3 field(int d, double x) {
  Vec3 E;
  E[0] = x;
  if (d > 1) E[1] = 0.3 * x;
  return E;
}

}  // namespace

TEST(History, PoissonCount) {
  const auto h = sample_history(1, 1e4, 3);
  EXPECT_NEAR(static_cast<double>(h.events.size()), 1e4, 5 * 100.0);
}

TEST(History, UniformParticleIndex) {
  const auto h = sample_history(1000, 1.0, 4);
  std::vector<double> bins(20, 0.0);
  for (const auto& ev : h.events) bins[ev.particle / 50] += 1.0;
  const double expected = static_cast<double>(h.events.size()) / 20.0;
  double chi2 = 0;
  for (double b : bins) chi2 += (b - expected) * (b - expected) / expected;
  EXPECT_LT(chi2, boost::math::quantile(boost::math::chi_squared(19), 0.999));
}

TEST(History, OrderedAndDeterministic) {
  EXPECT_TRUE(sample_history(10, 0.0, 1).events.empty());
  const auto a = sample_history(50, 3.0, 11), b = sample_history(50, 3.0, 11), c = sample_history(50, 3.0, 12);
  ASSERT_EQ(a.events.size(), b.events.size());
  for (std::size_t k = 0; k < a.events.size(); ++k) {
    EXPECT_EQ(a.events[k].t, b.events[k].t);
    EXPECT_EQ(a.events[k].particle, b.events[k].particle);
    EXPECT_LT(a.events[k].particle, 50u);
    EXPECT_LT(a.events[k].t, 3.0);
    if (k > 0) {
      EXPECT_GT(a.events[k].t, a.events[k - 1].t);
    }
  }
  EXPECT_NE(a.events.front().t, c.events.front().t);
  EXPECT_THROW(sample_history(0, 1.0, 1), Error);
  EXPECT_THROW(sample_history(3, -1.0, 1), Error);
}

TEST(RunA, ZeroFieldRandomizesDirections) {
  const std::size_t n = 10000;
  Ensemble e{Dim(2), std::vector<Vec3>(n), std::vector<Vec3>(n, Vec3{1.0, 0.0})};
  const Kernel k = Kernel::uniform(Dim(2));
  SimulationOptions opt;
  opt.sample_dt = 5.0;
  const auto tr = run_a(e, sample_history(n, 5.0, 21), k, Vec3{0.0, 0.0}, opt);
  const Ensemble& last = tr.states.back();
  std::vector<double> angles;
  for (const auto& v : last.v) {
    ASSERT_NEAR(norm(v), 1.0, 1e-12);
    angles.push_back((std::atan2(v[1], v[0]) + std::numbers::pi) / (2 * std::numbers::pi));
  }
  std::sort(angles.begin(), angles.end());
  double dmax = 0;
  for (std::size_t i = 0; i < n; ++i) {
    dmax = std::max({dmax, std::abs(angles[i] - static_cast<double>(i) / n),
                     std::abs(angles[i] - static_cast<double>(i + 1) / n)});
  }
  EXPECT_LT(dmax, 0.02);
}

TEST(RunA, EnergyConservedWithoutCollisions) {
  const Ensemble e = make_initial(200, Dim(3), 1.0, InitialFamily::gaussian, 5);
  auto h = sample_history(200, 5.0, 5);
  h.events.clear();
  SimulationOptions opt;
  opt.sample_dt = 0.5;
  const auto tr = run_a(e, h, Kernel::uniform(Dim(3)), Vec3{1.0, 0.0, 0.5}, opt);
  const double u0 = energy_of(e.v);
  for (const auto& s : tr.states) EXPECT_LT(std::abs(energy_of(s.v) - u0), 1e-12);
}

TEST(RunA, EnergyConservedAlongCollidingPath) {
  for (int d = 1; d <= 3; ++d) {
    const Ensemble e = make_initial(300, Dim(d), 1.0, InitialFamily::gaussian, 6);
    SimulationOptions opt;
    opt.sample_dt = 0.25;
    const auto tr = run_a(e, sample_history(300, 4.0, 6), Kernel::uniform(Dim(d)), field(d, 1.0), opt);
    const double u0 = energy_of(e.v);
    for (const auto& s : tr.states) EXPECT_LT(std::abs(energy_of(s.v) - u0), 1e-12 * u0) << "d=" << d;
  }
}

TEST(RunA, OneDimensionalParticleFlipsAtEvents) {
  const Ensemble e{Dim(1), {Vec3{0.25}}, {Vec3{0.8}}};
  const auto h = sample_history(1, 20.0, 7);
  ASSERT_GT(h.events.size(), 5u);
  SimulationOptions opt;
  opt.sample_dt = 0.01;
  const auto tr = run_a(e, h, Kernel::uniform(Dim(1)), Vec3{0.0}, opt);
  for (std::size_t s = 0; s < tr.times.size(); ++s) {
    double sign = 1.0;
    for (const auto& ev : h.events) {
      if (ev.t < tr.times[s] && ev.variates[0] < 0.5) sign = -sign;
    }
    ASSERT_EQ(tr.states[s].v[0][0], 0.8 * sign) << "t=" << tr.times[s];
  }
}

TEST(RunCoupled, ZeroFieldKeepsPathsEqual) {
  for (int d = 1; d <= 3; ++d) {
    const Kernel k = Kernel::uniform(Dim(d));
    const Ensemble e = make_initial(100, Dim(d), 1.0, InitialFamily::gaussian, 8);
    const Vec3 E;
    SimulationOptions opt;
    opt.sample_dt = 0.5;
    const auto rec = run_coupled(e, sample_history(100, 3.0, 8), k, E, current_for(e, k, E, 3.0), opt);
    for (double x : rec.distance) ASSERT_EQ(x, 0.0) << "d=" << d;
  }
}

TEST(RunCoupled, StartsTogetherAndCollisionsAreIsometric) {
  for (int d = 1; d <= 3; ++d) {
    const Kernel k = Kernel::uniform(Dim(d));
    const Ensemble e = make_initial(200, Dim(d), 1.0, InitialFamily::gaussian, 9);
    const Vec3 E = field(d, 0.7);
    SimulationOptions opt;
    opt.sample_dt = 0.5;
    opt.brute_force_isometry = true;
    const auto rec = run_coupled(e, sample_history(200, 5.0, 9), k, E, current_for(e, k, E, 5.0), opt);
    ASSERT_FALSE(rec.distance.empty());
    EXPECT_EQ(rec.distance.front(), 0.0);
    EXPECT_GT(rec.distance.back(), 0.0);
    EXPECT_GT(rec.collisions, 100u);
    EXPECT_LT(rec.max_iso_residual, 1e-9) << "d=" << d;
    EXPECT_EQ(rec.iso_residuals.size(), rec.collisions);
  }
}

TEST(RunCoupled, IdenticalAcrossThreadCounts) {
  const Kernel k = Kernel::uniform(Dim(2));
  const Vec3 E{0.5, 0.0};
  auto job = [&](std::size_t i) {
    const Ensemble e = make_initial(300, Dim(2), 1.0, InitialFamily::gaussian, 100 + i);
    SimulationOptions opt;
    opt.sample_dt = 0.1;
    return run_coupled(e, sample_history(300, 2.0, 100 + i), k, E, current_for(e, k, E, 2.0), opt).distance;
  };
  const auto serial = parallel_map(8, 1, job);
  const auto threaded = parallel_map(8, 4, job);
  for (std::size_t i = 0; i < 8; ++i) {
    ASSERT_EQ(serial[i].size(), threaded[i].size());
    EXPECT_EQ(0, std::memcmp(serial[i].data(), threaded[i].data(), serial[i].size() * sizeof(double)));
  }
}

TEST(RunCoupled, DistanceScalesLikeInverseSqrtN) {
  const Kernel k = Kernel::uniform(Dim(2));
  const Vec3 E{0.5, 0.0};
  auto mean_terminal = [&](std::size_t n) {
    double s = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Ensemble e = make_initial(n, Dim(2), 1.0, InitialFamily::gaussian, 500 + seed);
      const CurrentParams p{E, 1.0, rho_k(k), Dim(2)};
      const auto cur = solve_current(p, Vec3{}, 2.0);
      s += run_coupled(e, sample_history(n, 2.0, 500 + seed), k, E, cur).distance.back();
    }
    return s / 20;
  };
  const double ratio = mean_terminal(100) / mean_terminal(10000);
  EXPECT_GT(ratio, 10.0 * 0.65);
  EXPECT_LT(ratio, 10.0 * 1.35);
}

TEST(RunB, TracksTheMeanFieldCurrent) {
  const std::size_t n = 10000;
  const Kernel k = Kernel::uniform(Dim(2));
  const Vec3 E{0.5, 0.0};
  const Ensemble e = make_initial(n, Dim(2), 1.0, InitialFamily::gaussian, 13);
  const auto cur = solve_current(CurrentParams{E, 1.0, rho_k(k), Dim(2)}, Vec3{}, 3.0);
  SimulationOptions opt;
  opt.sample_dt = 0.5;
  const auto rec = run_b(e, sample_history(n, 3.0, 13), k, E, cur, opt);
  EXPECT_TRUE(rec.distance.empty());
  for (double err : rec.b_current_error) EXPECT_LT(err, 5.0 * std::sqrt(2.0 / n));
  for (double u : rec.b_energy) EXPECT_NEAR(u, 1.0, 0.1);
  EXPECT_FALSE(rec.energy_floor_event);
}

TEST(RunB, RejectsShortCurrent) {
  const Kernel k = Kernel::uniform(Dim(1));
  const Ensemble e = make_initial(10, Dim(1), 1.0, InitialFamily::gaussian, 1);
  const auto cur = solve_current(CurrentParams{Vec3{1.0}, 1.0, 1.0, Dim(1)}, Vec3{}, 1.0);
  EXPECT_THROW(run_b(e, sample_history(10, 2.0, 1), k, Vec3{1.0}, cur), Error);
  EXPECT_THROW(run_b(e, sample_history(11, 1.0, 1), k, Vec3{1.0}, cur), Error);
}

TEST(MarginalSamples, NearestSampleTime) {
  const Ensemble e = make_initial(50, Dim(2), 1.0, InitialFamily::shell, 14);
  SimulationOptions opt;
  opt.sample_dt = 0.5;
  const auto tr = run_a(e, sample_history(50, 2.0, 14), Kernel::uniform(Dim(2)), Vec3{1.0, 0.0}, opt);
  ASSERT_EQ(tr.times.size(), 5u);
  const auto at0 = marginal_samples(tr, 0.0);
  ASSERT_EQ(at0.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(at0[i].v, e.v[i]);
    EXPECT_EQ(at0[i].q, e.q[i]);
  }
  const auto mid = marginal_samples(tr, 1.1);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(mid[i].v, tr.states[2].v[i]);
  EXPECT_THROW(marginal_samples(tr, 2.5), Error);
  EXPECT_THROW(marginal_samples(Trajectory{}, 0.0), Error);
}

TEST(InitialData, FamiliesHaveTheRightEnergy) {
  const auto shell = make_initial(1000, Dim(3), 2.0, InitialFamily::shell, 15);
  for (const auto& v : shell.v) EXPECT_NEAR(norm2(v), 2.0, 1e-12);
  const auto gauss = make_initial(100000, Dim(3), 2.0, InitialFamily::gaussian, 15);
  EXPECT_NEAR(energy_of(gauss.v), 2.0, 5 * std::sqrt(initial_fourth_moment(Dim(3), 2.0, InitialFamily::gaussian) / 1e5));
  for (const auto& q : gauss.q) {
    for (int c = 0; c < 3; ++c) {
      ASSERT_GE(q[c], 0.0);
      ASSERT_LT(q[c], 1.0);
    }
  }
  EXPECT_DOUBLE_EQ(energy_floor(8.0), 1.0);
}
