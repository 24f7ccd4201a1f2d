#pragma once

// Finite-volume solver for the spatially homogeneous kinetic equation in d = 1
//   df/dt + d/dv [ (E - (E j~(t) / u~) v) f ] = (rho / 2) [ f(-v) - f(v) ]
// Strang splitting: exact collision half steps around a MUSCL/SSP-RK2
// transport step with closed (zero-flux) boundaries.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "thermochaos/core.hpp"
#include "thermochaos/current.hpp"
#include "thermochaos/kernel.hpp"

namespace thermochaos {

struct VelocityGrid {
  double v_max = 1.0;
  std::size_t M = 0;
  double dv = 0.0;
  std::vector<double> f;

  VelocityGrid() = default;
  VelocityGrid(double vmax, std::size_t cells) : v_max(vmax), M(cells), f(cells, 0.0) {
    if (!(vmax > 0.0)) throw Error(Errc::invalid_argument, "v_max must be positive");
    if (cells < 2 || cells % 2 != 0) throw Error(Errc::invalid_argument, "M must be even and >= 2");
    dv = 2.0 * v_max / static_cast<double>(M);
  }

  double center(std::size_t m) const { return -v_max + (static_cast<double>(m) + 0.5) * dv; }
  double face(std::size_t m) const { return -v_max + static_cast<double>(m) * dv; }  // left face of cell m
  std::size_t mirror(std::size_t m) const { return M - 1 - m; }
};

// Cell averages of a density, renormalized to unit mass.
inline VelocityGrid project_density(double v_max, std::size_t M, const std::function<double(double)>& pdf) {
  VelocityGrid g(v_max, M);
  double mass = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    const double a = g.face(m), b = a + g.dv;
    // 3-point Gauss-Legendre per cell
    const double c = 0.5 * (a + b), h = 0.5 * (b - a), x = std::sqrt(0.6);
    const double avg = (5.0 * pdf(c - h * x) + 8.0 * pdf(c) + 5.0 * pdf(c + h * x)) / 18.0;
    if (!(avg >= 0.0)) throw Error(Errc::normalization, "density is negative near v = " + std::to_string(c));
    g.f[m] = avg;
    mass += avg * g.dv;
  }
  if (!(mass > 0.0)) throw Error(Errc::normalization, "density has zero mass on the grid");
  for (auto& x : g.f) x /= mass;
  return g;
}

// Histogram of samples as a grid density.
inline VelocityGrid project_samples(double v_max, std::size_t M, std::span<const double> samples) {
  VelocityGrid g(v_max, M);
  if (samples.empty()) throw Error(Errc::insufficient_data, "no samples to project");
  const double w = 1.0 / (static_cast<double>(samples.size()) * g.dv);
  for (double v : samples) {
    if (!(std::abs(v) < v_max)) throw Error(Errc::grid_too_small, "sample outside [-v_max, v_max]");
    auto m = static_cast<std::size_t>((v + v_max) / g.dv);
    g.f[std::min(m, M - 1)] += w;
  }
  return g;
}

struct Moments {
  double mass = 0.0;
  double j = 0.0;
  double u = 0.0;
  double a = 0.0;  // integral of (v^2 - u)^2 f
};

// Moments of the piecewise-constant density, integrated exactly cell by cell.
inline Moments moments(const VelocityGrid& g) {
  const double h2 = g.dv * g.dv;
  const double mass = pairwise_sum<double>(g.M, [&](std::size_t m) { return g.f[m]; }) * g.dv;
  const double m1 = pairwise_sum<double>(g.M, [&](std::size_t m) { return g.f[m] * g.center(m); }) * g.dv;
  const double m2 = pairwise_sum<double>(g.M, [&](std::size_t m) {
                      const double c = g.center(m);
                      return g.f[m] * (c * c + h2 / 12.0);
                    }) * g.dv;
  const double m4 = pairwise_sum<double>(g.M, [&](std::size_t m) {
                      const double c2 = g.center(m) * g.center(m);
                      return g.f[m] * (c2 * c2 + 0.5 * c2 * h2 + h2 * h2 / 80.0);
                    }) * g.dv;
  return {mass, m1, m2, m4 - 2.0 * m2 * m2 + m2 * m2 * mass};
}

struct VbeState {
  VelocityGrid grid;
  double t = 0.0;
  double j_tilde = 0.0;
  double u_tilde = 0.0;
  double a = 0.0;
  double mass = 0.0;

  VbeState() = default;
  explicit VbeState(VelocityGrid g, double t0 = 0.0) : grid(std::move(g)), t(t0) { refresh(); }

  void refresh() {
    const Moments mo = moments(grid);
    j_tilde = mo.j;
    u_tilde = mo.u;
    a = mo.a;
    mass = mo.mass;
  }
};

inline constexpr double kVbeMaxCfl = 0.9;
inline constexpr double kVbeDefaultCfl = 0.4;
inline constexpr double kVbeMaxBoundaryFlux = 1e-10;

namespace detail {

inline double minmod(double a, double b) {
  if (a * b <= 0.0) return 0.0;
  return std::abs(a) < std::abs(b) ? a : b;
}

// Odd part of f decays by exp(-rate * tau); the even part is invariant.
inline void collide_exact(std::vector<double>& f, double factor) {
  const std::size_t M = f.size();
  for (std::size_t m = 0; m < M / 2; ++m) {
    const std::size_t r = M - 1 - m;
    const double even = 0.5 * (f[m] + f[r]);
    const double odd = 0.5 * (f[m] - f[r]);
    f[m] = even + factor * odd;
    f[r] = even - factor * odd;
  }
}

// -d/dv (Y f) with face fluxes from minmod-limited upwind reconstruction.
// Returns the would-be outflow rate through the outer faces.
inline double transport_rhs(const VelocityGrid& g, const std::vector<double>& f, double E, double alpha,
                            std::vector<double>& slope, std::vector<double>& flux, std::vector<double>& out) {
  const std::size_t M = g.M;
  slope.assign(M, 0.0);
  for (std::size_t m = 1; m + 1 < M; ++m) slope[m] = minmod(f[m] - f[m - 1], f[m + 1] - f[m]);
  flux.assign(M + 1, 0.0);
  for (std::size_t k = 1; k < M; ++k) {
    const double y = E - alpha * g.face(k);
    flux[k] = y >= 0.0 ? y * (f[k - 1] + 0.5 * slope[k - 1]) : y * (f[k] - 0.5 * slope[k]);
  }
  const double y_left = E - alpha * g.face(0);
  const double y_right = E - alpha * (g.face(M - 1) + g.dv);
  const double leak = std::max(0.0, -y_left) * f[0] + std::max(0.0, y_right) * f[M - 1];
  out.resize(M);
  for (std::size_t m = 0; m < M; ++m) out[m] = -(flux[m + 1] - flux[m]) / g.dv;
  return leak;
}

inline double max_face_speed(const VelocityGrid& g, double E, double alpha) {
  return std::max(std::abs(E + alpha * g.v_max), std::abs(E - alpha * g.v_max));
}

}  // namespace detail

// One Strang step on [t, t + dt]. The transport coefficient uses j~ from
// the current solution; the collision rate is its rho_k.
inline VbeState step_vbe(const VbeState& state, double E, double dt, const CurrentSolution& current) {
  if (!(dt > 0.0)) throw Error(Errc::step_size, "dt must be positive");
  const double t0 = state.t, t1 = state.t + dt;
  if (t1 > current.t_end() * (1.0 + 1e-12) + 1e-12) throw Error(Errc::out_of_range, "current does not cover the step");
  const VelocityGrid& g = state.grid;
  const double u = current.params().u_tilde;
  const double a0 = E * current.at(t0)[0] / u;
  const double a1 = E * current.at(std::min(t1, current.t_end()))[0] / u;
  const double cfl = std::max(detail::max_face_speed(g, E, a0), detail::max_face_speed(g, E, a1)) * dt / g.dv;
  if (cfl > kVbeMaxCfl) {
    throw Error(Errc::step_size, "CFL number " + std::to_string(cfl) + " exceeds " + std::to_string(kVbeMaxCfl));
  }
  const double half = std::exp(-current.params().rho_k * 0.5 * dt);

  VbeState next = state;
  std::vector<double>& f = next.grid.f;
  detail::collide_exact(f, half);

  std::vector<double> slope, flux, k1, k2, f1(g.M);
  const double leak0 = detail::transport_rhs(g, f, E, a0, slope, flux, k1);
  for (std::size_t m = 0; m < g.M; ++m) f1[m] = f[m] + dt * k1[m];
  const double leak1 = detail::transport_rhs(g, f1, E, a1, slope, flux, k2);
  for (std::size_t m = 0; m < g.M; ++m) f[m] = 0.5 * f[m] + 0.5 * (f1[m] + dt * k2[m]);
  const double leaked = 0.5 * dt * (leak0 + leak1);
  if (leaked > kVbeMaxBoundaryFlux) {
    throw Error(Errc::grid_too_small, "mass " + std::to_string(leaked) + " reaching |v| = v_max in one step");
  }

  detail::collide_exact(f, half);
  next.t = t1;
  next.refresh();
  return next;
}

struct VbeRun {
  double E = 0.0;
  double u_tilde = 0.0;  // of the initial grid density
  double rho_k = 1.0;
  double dv = 0.0;
  double dt = 0.0;
  std::vector<double> times;
  std::vector<double> j_tilde;
  std::vector<double> u;
  std::vector<double> a;
  std::vector<double> mass;
  std::vector<VbeState> snapshots;
  VbeState final_state;
};

inline double default_vbe_dt(const VelocityGrid& g, double E, double u_tilde, double cfl = kVbeDefaultCfl) {
  const double alpha_max = std::abs(E) / std::sqrt(u_tilde);
  const double speed = std::abs(E) + alpha_max * g.v_max;
  return speed > 0.0 ? cfl * g.dv / speed : 1e-2;
}

// Integrates to t_end with uniform steps (dt <= 0 selects the default);
// records moments every `record_every` steps and full states at snapshot_times.
inline VbeRun solve_vbe(const VelocityGrid& f0, double E, double t_end, const CurrentSolution& current, double dt = 0.0,
                        std::size_t record_every = 1, std::vector<double> snapshot_times = {}) {
  VbeState s(f0);
  VbeRun run;
  run.E = E;
  run.u_tilde = s.u_tilde;
  run.rho_k = current.params().rho_k;
  run.dv = f0.dv;
  if (dt <= 0.0) dt = default_vbe_dt(f0, E, current.params().u_tilde);
  const auto steps = static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9));
  dt = steps > 0 ? t_end / static_cast<double>(steps) : dt;
  run.dt = dt;
  std::sort(snapshot_times.begin(), snapshot_times.end());
  std::size_t next_snap = 0;
  auto record = [&] {
    run.times.push_back(s.t);
    run.j_tilde.push_back(s.j_tilde);
    run.u.push_back(s.u_tilde);
    run.a.push_back(s.a);
    run.mass.push_back(s.mass);
    while (next_snap < snapshot_times.size() && snapshot_times[next_snap] <= s.t + 0.5 * dt) {
      run.snapshots.push_back(s);
      ++next_snap;
    }
  };
  record();
  if (record_every == 0) record_every = 1;
  for (std::size_t k = 1; k <= steps; ++k) {
    s = step_vbe(s, E, dt, current);
    s.t = static_cast<double>(k) * dt;
    if (k % record_every == 0 || k == steps) record();
  }
  run.final_state = s;
  return run;
}

// max_t |j~_PDE(t) - j~_ODE(t)| over the recorded times.
inline double compare_current(const VbeRun& run, const CurrentSolution& ode) {
  const auto& p = ode.params();
  if (p.d != 1) throw Error(Errc::parameter_mismatch, "ODE solution is not one-dimensional");
  if (std::abs(p.E[0] - run.E) > 1e-12 * std::max(1.0, std::abs(run.E)) ||
      std::abs(p.rho_k - run.rho_k) > 1e-12 ||
      std::abs(p.u_tilde - run.u_tilde) > 1e-6 * p.u_tilde) {
    throw Error(Errc::parameter_mismatch, "PDE and ODE parameters differ");
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < run.times.size(); ++k) {
    if (run.times[k] > ode.t_end() * (1.0 + 1e-12)) break;
    worst = std::max(worst, std::abs(run.j_tilde[k] - ode.at(run.times[k])[0]));
  }
  return worst;
}

}  // namespace thermochaos
