#pragma once

// Experiment pipelines shared by the command-line tool and the acceptance
// suite: per-seed coupled paths, N-sweeps and the d = 1 kinetic solve.

#include <cstdint>
#include <optional>
#include <vector>

#include "thermochaos/config.hpp"
#include "thermochaos/current.hpp"
#include "thermochaos/kernel.hpp"
#include "thermochaos/metrics.hpp"
#include "thermochaos/parallel.hpp"
#include "thermochaos/processes.hpp"
#include "thermochaos/vbe1d.hpp"

namespace thermochaos {

// Seed of path `index` at size N, derived from the master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t n, std::uint32_t index) {
  RandomStream r(master, Purpose::ensemble, index, n);
  const std::uint64_t hi = r.next_u32();
  return (hi << 32) | r.next_u32();
}

struct Setup {
  Kernel kernel;
  CurrentParams params;
  CurrentSolution current;
};

inline Setup make_setup(const RunConfig& c) {
  Kernel k = make_kernel(c.kernel, c.dim());
  CurrentParams p{c.field(), c.u_tilde, rho_k(k), c.dim()};
  CurrentSolution sol = solve_current(p, c.initial_current(), c.horizon);
  return {std::move(k), p, std::move(sol)};
}

struct PathSummary {
  std::size_t n = 0;
  std::uint32_t index = 0;
  std::uint64_t seed = 0;
  double sup_distance = 0.0;
  double terminal_distance = 0.0;
  double max_iso_residual = 0.0;
  double b_energy_min = 0.0;
  bool energy_floor_event = false;
  std::size_t collisions = 0;
  std::vector<double> gaps;  // coupled gap per test function at gap_time
  double marginal_w1 = 0.0;  // A- vs B-marginal velocities at gap_time
  ParticlePair pair_t0;
  ParticlePair pair_gap;
  CouplingRecord record;  // snapshots dropped
};

inline PathSummary run_path(const RunConfig& c, const Setup& s, std::size_t n, std::uint32_t index,
                            const std::vector<TestFunction>& bank, bool brute_force = false) {
  PathSummary out;
  out.n = n;
  out.index = index;
  out.seed = derive_seed(c.master_seed, n, index);
  const CollisionHistory h = sample_history(n, c.horizon, out.seed);
  const Ensemble v0 = make_initial(n, c.dim(), c.u_tilde, c.family(), out.seed);
  SimulationOptions opt;
  opt.dt = c.dt;
  opt.sample_dt = c.sample_dt;
  opt.snapshot_times = {c.metrics.gap_time};
  opt.brute_force_isometry = brute_force;
  opt.keep_iso_residuals = false;
  CouplingRecord rec = run_coupled(v0, h, s.kernel, c.field(), s.current, opt);

  out.sup_distance = rec.sup_distance();
  out.terminal_distance = rec.terminal_distance();
  out.max_iso_residual = rec.max_iso_residual;
  out.b_energy_min = rec.b_energy_min;
  out.energy_floor_event = rec.energy_floor_event;
  out.collisions = rec.collisions;
  out.pair_t0 = {{v0.q[0], v0.v[0]}, {v0.q[n > 1 ? 1 : 0], v0.v[n > 1 ? 1 : 0]}};
  const Snapshot& snap = rec.snapshots.front();
  out.pair_gap = {{snap.a.q[0], snap.a.v[0]}, {snap.a.q[n > 1 ? 1 : 0], snap.a.v[n > 1 ? 1 : 0]}};
  if (n >= 2) {
    for (const auto& phi : bank) out.gaps.push_back(coupled_gap_run(snap.a, snap.b, phi));
  }
  if (c.d == 1) {
    std::vector<double> va(n), vb(n);
    for (std::size_t i = 0; i < n; ++i) {
      va[i] = snap.a.v[i][0];
      vb[i] = snap.b.v[i][0];
    }
    out.marginal_w1 = w1_distance_1d(va, vb);
  } else {
    out.marginal_w1 = sliced_w1(EmpiricalMeasure::of(snap.a), EmpiricalMeasure::of(snap.b), c.metrics.n_directions,
                                out.seed);
  }
  rec.snapshots.clear();
  out.record = std::move(rec);
  return out;
}

struct SweepResult {
  PocReport report;
  std::vector<std::vector<PathSummary>> paths;  // [N index][seed]
  std::vector<std::string> bank_names;
};

inline SweepResult sweep_n(const RunConfig& c, std::size_t threads) {
  const Setup setup = make_setup(c);
  const auto bank = test_bank(c.dim());
  SweepResult res;
  for (const auto& phi : bank) res.bank_names.push_back(phi.name());

  std::vector<std::pair<std::size_t, std::uint32_t>> tasks;
  for (std::size_t k = 0; k < c.N.size(); ++k) {
    for (std::uint32_t s = 0; s < c.seeds; ++s) tasks.emplace_back(k, s);
  }
  auto results = parallel_map(tasks.size(), threads, [&](std::size_t t) {
    return run_path(c, setup, c.N[tasks[t].first], tasks[t].second, bank);
  });

  res.paths.assign(c.N.size(), {});
  for (std::size_t t = 0; t < tasks.size(); ++t) res.paths[tasks[t].first].push_back(std::move(results[t]));

  for (std::size_t k = 0; k < c.N.size(); ++k) {
    const auto& runs = res.paths[k];
    PocRow row;
    row.n = c.N[k];
    row.seeds = runs.size();
    std::vector<double> sup, term, w1;
    for (const auto& r : runs) {
      sup.push_back(r.sup_distance);
      term.push_back(r.terminal_distance);
      w1.push_back(r.marginal_w1);
    }
    row.sup_distance = replicate_stat(sup);
    row.terminal_distance = replicate_stat(term);
    row.sliced_w1 = replicate_stat(w1);
    row.gap_names = res.bank_names;
    if (row.n >= 2) {
      for (std::size_t g = 0; g < bank.size(); ++g) {
        std::vector<double> xs;
        for (const auto& r : runs) xs.push_back(r.gaps[g]);
        row.gaps.push_back(replicate_stat(xs));
      }
    }
    res.report.rows.push_back(std::move(row));
  }
  fit_report(res.report);
  return res;
}

// Independent draws from the initial law, for factorization gaps at t = 0.
inline std::vector<PhasePoint> fresh_initial_samples(const RunConfig& c, std::size_t count) {
  RandomStream r(c.master_seed, Purpose::f_samples);
  const std::uint64_t hi = r.next_u32();
  const std::uint64_t seed = (hi << 32) | r.next_u32();
  const Ensemble e = make_initial(count, c.dim(), c.u_tilde, c.family(), seed);
  std::vector<PhasePoint> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = {e.q[i], e.v[i]};
  return out;
}

// d = 1 Gaussian initial density on the configured grid.
inline VelocityGrid gaussian_grid(double u_tilde, double v_max, std::size_t M) {
  const double var = u_tilde;
  return project_density(v_max, M, [var](double v) {
    return std::exp(-0.5 * v * v / var) / std::sqrt(2.0 * std::numbers::pi * var);
  });
}

struct VbeSolve {
  VbeRun run;
  CurrentSolution ode;
  double deviation = 0.0;
};

// PDE solve with the ODE current taken from the discrete initial density.
inline VbeSolve solve_vbe_config(const RunConfig& c, std::size_t record_every = 1,
                                 std::vector<double> snapshot_times = {}) {
  if (c.d != 1) throw Error(Errc::unsupported_dimension, "the kinetic solver is one-dimensional");
  VelocityGrid g0 = c.family() == InitialFamily::gaussian
                        ? gaussian_grid(c.u_tilde, c.vbe_v_max(), c.vbe.M)
                        : project_density(c.vbe_v_max(), c.vbe.M, [&](double v) {
                            // shell: narrow bumps at +-sqrt(u)
                            const double s = std::sqrt(c.u_tilde), w = 0.02 * s;
                            auto bump = [w](double x) { return std::abs(x) < w ? (1.0 - std::abs(x) / w) / w : 0.0; };
                            return 0.5 * (bump(v - s) + bump(v + s));
                          });
  const Moments m0 = moments(g0);
  CurrentParams p{c.field(), m0.u, 1.0, Dim(1)};
  VbeSolve out;
  out.ode = solve_current(p, Vec3{m0.j}, c.horizon);
  const double dt = default_vbe_dt(g0, c.E[0], m0.u, c.vbe.cfl);
  out.run = solve_vbe(g0, c.E[0], c.horizon, out.ode, dt, record_every, std::move(snapshot_times));
  out.deviation = compare_current(out.run, out.ode);
  return out;
}

}  // namespace thermochaos
