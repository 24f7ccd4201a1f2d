#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "thermochaos/experiments/pipelines.hpp"
#include "thermochaos/random.hpp"
#include "thermochaos/vbe1d.hpp"

using namespace thermochaos;

namespace {

double gauss(double v) { return std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi); }

CurrentSolution ode_for(const VelocityGrid& g, double E, double t_end) {
  const Moments m = moments(g);
  return solve_current(CurrentParams{Vec3{E}, m.u, 1.0, Dim(1)}, Vec3{m.j}, t_end);
}

// Tilted Gaussian with a nonzero odd part.
VelocityGrid tilted(std::size_t M) {
  return project_density(8.0, M, [](double v) { return gauss(v) * (1.0 + 0.5 * std::tanh(v)); });
}

}  // namespace

TEST(VelocityGrid, Symmetry) {
  const VelocityGrid g(8.0, 64);
  EXPECT_DOUBLE_EQ(g.dv, 0.25);
  EXPECT_DOUBLE_EQ(g.face(0), -8.0);
  for (std::size_t m = 0; m < g.M; ++m) {
    EXPECT_EQ(g.mirror(g.mirror(m)), m);
    EXPECT_NEAR(g.center(m), -g.center(g.mirror(m)), 1e-15);
  }
  EXPECT_THROW(VelocityGrid(8.0, 63), Error);
  EXPECT_THROW(VelocityGrid(-1.0, 64), Error);
}

TEST(Moments, GaussianDensityProjection) {
  const auto m = moments(project_density(8.0, 2048, gauss));
  EXPECT_NEAR(m.mass, 1.0, 1e-14);
  EXPECT_NEAR(m.j, 0.0, 1e-14);
  EXPECT_NEAR(m.u, 1.0, 1e-3);
  EXPECT_NEAR(m.a, 2.0, 1e-3);
}

TEST(Moments, GaussianSampleProjection) {
  RandomStream r(3, Purpose::test);
  const std::size_t n = 100000;
  std::vector<double> xs(n);
  for (auto& x : xs) x = r.normal();
  const auto m = moments(project_samples(8.0, 2048, xs));
  EXPECT_NEAR(m.mass, 1.0, 1e-12);
  EXPECT_NEAR(m.j, 0.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(m.u, 1.0, 5.0 * std::sqrt(2.0 / n));
  // Var((v^2 - 1)^2) = 56 for a standard normal
  EXPECT_NEAR(m.a, 2.0, 5.0 * std::sqrt(56.0 / n));
  EXPECT_THROW(project_samples(8.0, 16, std::vector<double>{}), Error);
}

TEST(Vbe, EvenDensityIsStationaryWithoutField) {
  const VelocityGrid g = project_density(8.0, 512, gauss);
  const auto ode = ode_for(g, 0.0, 2.0);
  const auto run = solve_vbe(g, 0.0, 2.0, ode);
  for (std::size_t m = 0; m < g.M; ++m) EXPECT_NEAR(run.final_state.grid.f[m], g.f[m], 1e-15);
}

TEST(Vbe, OddPartDecaysWithoutField) {
  const VelocityGrid g = tilted(2048);
  const auto ode = ode_for(g, 0.0, 1.0);
  const auto run = solve_vbe(g, 0.0, 1.0, ode);
  const double j0 = moments(g).j;
  ASSERT_GT(std::abs(j0), 0.1);
  EXPECT_NEAR(run.j_tilde.back(), j0 * std::exp(-1.0), 1e-6);
  const auto& f = run.final_state.grid.f;
  for (std::size_t m = 0; m < g.M; ++m) {
    const double odd0 = 0.5 * (g.f[m] - g.f[g.mirror(m)]);
    const double odd1 = 0.5 * (f[m] - f[g.mirror(m)]);
    ASSERT_NEAR(odd1, odd0 * std::exp(-1.0), 1e-6);
  }
  EXPECT_LT(compare_current(run, ode), 1e-6);
}

TEST(Vbe, MassAndPositivityOverManySteps) {
  const VelocityGrid g = project_density(8.0, 256, gauss);
  const double dt = default_vbe_dt(g, 1.0, 1.0);
  const auto ode = ode_for(g, 1.0, 1e4 * dt * 1.001);
  VbeState s(g);
  for (int k = 0; k < 10000; ++k) {
    s = step_vbe(s, 1.0, dt, ode);
    for (double x : s.grid.f) ASSERT_GE(x, 0.0);
  }
  EXPECT_NEAR(s.mass, 1.0, 1e-12);
}

TEST(Vbe, TracksTheCurrentOde) {
  const VelocityGrid g = project_density(8.0, 512, gauss);
  const auto ode = ode_for(g, 1.0, 20.0);
  const auto run = solve_vbe(g, 1.0, 20.0, ode);
  const double tol = 5.0 * g.dv * g.dv + 5.0 * run.dt * run.dt;
  EXPECT_LT(compare_current(run, ode), tol);
  EXPECT_NEAR(run.j_tilde.back(), ode.y_plus(), tol);
  EXPECT_NEAR(run.mass.back(), 1.0, 1e-12);
}

TEST(Vbe, SecondOrderInVelocity) {
  auto error_at = [](std::size_t M) {
    const VelocityGrid g = project_density(8.0, M, gauss);
    const auto ode = ode_for(g, 1.0, 2.0);
    return compare_current(solve_vbe(g, 1.0, 2.0, ode), ode);
  };
  const double ratio = error_at(128) / error_at(256);
  EXPECT_GT(ratio, 3.0);
  EXPECT_LT(ratio, 5.5);
}

TEST(Vbe, EnergyDriftShrinksWithGrid) {
  auto drift_at = [](std::size_t M) {
    const VelocityGrid g = project_density(8.0, M, gauss);
    const auto ode = ode_for(g, 1.0, 2.0);
    const auto run = solve_vbe(g, 1.0, 2.0, ode);
    double worst = 0;
    for (double u : run.u) worst = std::max(worst, std::abs(u - run.u.front()));
    return worst;
  };
  const double coarse = drift_at(128), fine = drift_at(256);
  EXPECT_LT(fine, coarse / 3.0);
  EXPECT_LT(fine, 5.0 * (16.0 / 256) * (16.0 / 256));
}

TEST(Vbe, Errors) {
  const VelocityGrid g = project_density(8.0, 256, gauss);
  const auto ode = ode_for(g, 1.0, 1.0);
  VbeState s(g);
  try {
    step_vbe(s, 1.0, 0.1, ode);
    FAIL() << "CFL violation accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::step_size);
  }
  EXPECT_THROW(step_vbe(s, 1.0, 2.0, ode), Error);

  const VelocityGrid narrow = project_density(1.5, 64, gauss);
  const auto ode_n = ode_for(narrow, 1.0, 1.0);
  try {
    solve_vbe(narrow, 1.0, 1.0, ode_n);
    FAIL() << "boundary leak accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::grid_too_small);
  }

  const auto run = solve_vbe(g, 1.0, 0.5, ode);
  const auto other = solve_current(CurrentParams{Vec3{2.0}, moments(g).u, 1.0, Dim(1)}, Vec3{}, 1.0);
  const auto two_d = solve_current(CurrentParams{Vec3{1.0, 0.0}, 1.0, 1.0, Dim(2)}, Vec3{}, 1.0);
  for (const auto* sol : {&other, &two_d}) {
    try {
      compare_current(run, *sol);
      FAIL() << "mismatched parameters accepted";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::parameter_mismatch);
    }
  }
}
