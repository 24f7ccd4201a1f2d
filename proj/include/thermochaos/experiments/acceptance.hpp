#pragma once

// The acceptance suite: eleven pass/fail checks with pinned tolerances,
// shared by `thermochaos accept` and the ctest acceptance binary.

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "thermochaos/config.hpp"
#include "thermochaos/current.hpp"
#include "thermochaos/experiments/pipelines.hpp"
#include "thermochaos/flows.hpp"
#include "thermochaos/kernel.hpp"
#include "thermochaos/metrics.hpp"
#include "thermochaos/parallel.hpp"
#include "thermochaos/processes.hpp"
#include "thermochaos/vbe1d.hpp"

namespace thermochaos::acceptance {

struct CriterionResult {
  int id = 0;
  std::string title;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
  double budget_seconds = 0.0;  // 0: no runtime limit
};

struct Options {
  std::size_t threads = 1;
  std::uint64_t seed = 20240601;
};

namespace detail {

inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

// Independent composite Simpson rule for the oracle values.
template <class F>
double simpson(F&& f, double a, double b, int panels) {
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

inline RunConfig sweep_config(std::uint64_t seed) {
  RunConfig c;
  c.d = 2;
  c.N = {100, 316, 1000, 3162, 10000};
  c.E = {0.5, 0.0};
  c.j0 = {0.0, 0.0};
  c.u_tilde = 1.0;
  c.horizon = 2.0;
  c.sample_dt = 0.01;
  c.seeds = 20;
  c.master_seed = seed;
  c.metrics.gap_time = 1.0;
  return c;
}

}  // namespace detail

// 1. rho_k of the uniform kernel.
inline CriterionResult criterion_rho(const Options&) {
  CriterionResult r{1, "rho_k of the uniform kernel", false, "", 0, 1.0};
  const double r1 = rho_k(Kernel::uniform(Dim(1)));
  const Kernel k2 = Kernel::uniform(Dim(2)), k3 = Kernel::uniform(Dim(3));
  const double r2 = rho_k(k2), r3 = rho_k(k3);
  const double pi = std::numbers::pi;
  const double o2 = 2.0 * 2.0 * detail::simpson([&](double t) { return k2(std::cos(t)) * std::cos(t) * std::cos(t); }, 0, pi, 20000);
  const double o3 =
      2.0 * 2.0 * pi * detail::simpson([&](double t) { return k3(std::cos(t)) * std::pow(std::cos(t), 2) * std::sin(t); }, 0, pi, 20000);
  r.passed = r1 == 1.0 && std::abs(r2 - 1.0) < 1e-9 && std::abs(r3 - 2.0 / 3.0) < 1e-9 && std::abs(r2 - o2) < 1e-9 &&
             std::abs(r3 - o3) < 1e-9;
  r.detail = "d=1: " + detail::fmt(r1) + ", |d=2 - 1| = " + detail::fmt(std::abs(r2 - 1.0)) + ", |d=3 - 2/3| = " +
             detail::fmt(std::abs(r3 - 2.0 / 3.0)) + " (tol 1e-9)";
  return r;
}

// 2. Current ODE converges to y+ and shows fourth-order refinement.
inline CriterionResult criterion_current(const Options&) {
  CriterionResult r{2, "current ODE: convergence to y+ and RK4 order", false, "", 0, 1.0};
  const CurrentParams p{Vec3{1.0}, 1.0, 1.0, Dim(1)};
  const double y_plus = (-1.0 + std::sqrt(5.0)) / 2.0;
  const auto sol = solve_current(p, Vec3{0.0}, 20.0);
  const double gap = std::abs(sol.values().back()[0] - y_plus);
  const double ref = solve_current(p, Vec3{0.0}, 2.0, 1e-4).values().back()[0];
  const double e1 = std::abs(solve_current(p, Vec3{0.0}, 2.0, 0.1).values().back()[0] - ref);
  const double e2 = std::abs(solve_current(p, Vec3{0.0}, 2.0, 0.05).values().back()[0] - ref);
  const double ratio = e1 / e2;
  r.passed = gap < 1e-6 && ratio > 12.0 && ratio < 20.0;
  r.detail = "|y(20) - y+| = " + detail::fmt(gap) + " (tol 1e-6), error ratio dt/2 = " + detail::fmt(ratio) +
             " (expect ~16, accepted (12, 20))";
  return r;
}

// 3. u(V) conserved along a long A-process path with collisions.
inline CriterionResult criterion_energy(const Options& o) {
  CriterionResult r{3, "A-process energy invariant over 1e6 steps", false, "", 0, 120.0};
  const std::size_t n = 1000;
  const double horizon = 1000.0;
  const Kernel k = Kernel::uniform(Dim(2));
  const Ensemble v0 = make_initial(n, Dim(2), 1.0, InitialFamily::gaussian, o.seed);
  const CollisionHistory h = sample_history(n, horizon, o.seed);
  SimulationOptions opt;
  opt.dt = 1e-3;
  opt.sample_dt = 10.0;
  const double u0 = energy_of(v0.v);
  opt.snapshot_times = thermochaos::detail::sample_grid(horizon, opt.sample_dt);
  thermochaos::detail::PathDriver driver(v0, h, k, Vec3{0.5, 0.0}, nullptr, true, opt, u0);
  const CouplingRecord rec = driver.run();
  double drift = 0.0;
  for (const auto& s : rec.snapshots) drift = std::max(drift, std::abs(energy_of(s.a.v) - u0) / u0);
  r.passed = drift < 1e-12 && rec.substeps >= 1'000'000;
  r.detail = "flow steps = " + std::to_string(rec.substeps) + ", collisions = " + std::to_string(rec.collisions) +
             ", max relative u drift = " + detail::fmt(drift) + " (tol 1e-12)";
  return r;
}

// 4. Isometry of matched collisions, brute force over >= 1e5 collisions.
inline CriterionResult criterion_isometry(const Options& o) {
  CriterionResult r{4, "coupling isometry at collisions", false, "", 0, 60.0};
  bool ok = true;
  std::ostringstream det;
  for (int d = 1; d <= 3; ++d) {
    const Dim dim(d);
    const std::size_t n = 1000;
    const double horizon = d == 1 ? 205.0 : 102.0;  // d = 1: half the events flip
    const Kernel k = Kernel::uniform(dim);
    Vec3 E;
    E[0] = 0.5;
    const CurrentParams p{E, 1.0, rho_k(k), dim};
    const auto cur = solve_current(p, Vec3{}, horizon);
    const std::uint64_t seed = o.seed + static_cast<std::uint64_t>(d);
    SimulationOptions opt;
    opt.sample_dt = horizon;
    opt.brute_force_isometry = true;
    opt.keep_iso_residuals = false;
    const auto rec = run_coupled(make_initial(n, dim, 1.0, InitialFamily::gaussian, seed),
                                 sample_history(n, horizon, seed), k, E, cur, opt);

    RandomStream rng(seed, Purpose::test);
    auto unit = [&] {
      Vec3 z;
      if (d == 1) return Vec3{rng.uniform() < 0.5 ? -1.0 : 1.0};
      for (int i = 0; i < d; ++i) z[i] = rng.normal();
      return z / norm(z);
    };
    double worst = 0.0;
    for (int t = 0; t < 10000; ++t) {
      const UnitVector a(unit(), dim), ap(unit(), dim), b(unit(), dim);
      const UnitVector bp = match_collision(a, ap, b);
      worst = std::max({worst, std::abs(dot(a.vec(), ap.vec()) - dot(b.vec(), bp.vec())),
                        std::abs(dot(a.vec(), b.vec()) - dot(ap.vec(), bp.vec()))});
    }
    const bool pass_d = rec.collisions >= 100000 && rec.max_iso_residual < 1e-9 && worst < 1e-10;
    ok = ok && pass_d;
    det << "d=" << d << ": " << rec.collisions << " collisions, max residual " << detail::fmt(rec.max_iso_residual)
        << ", triple error " << detail::fmt(worst) << "; ";
  }
  r.passed = ok;
  r.detail = det.str() + "(tol 1e-9 sqrt(u), 1e-10)";
  return r;
}

struct SweepCache {
  std::optional<SweepResult> sweep;
  RunConfig config;
};

// 5. N^{-1/2} scaling of the pathwise distance.
inline CriterionResult criterion_scaling(const Options& o, SweepCache& cache) {
  CriterionResult r{5, "pathwise distance scaling in N", false, "", 0, 600.0};
  cache.config = detail::sweep_config(o.seed);
  cache.sweep = sweep_n(cache.config, o.threads);
  const auto& rep = cache.sweep->report;
  const double slope = rep.distance_fit->slope;
  r.passed = slope >= -0.65 && slope <= -0.35;
  std::ostringstream det;
  det << "slope " << detail::fmt(slope) << " in [-0.65, -0.35]; mean sup distance:";
  for (const auto& row : rep.rows) det << " N=" << row.n << ":" << detail::fmt(row.sup_distance.mean);
  r.detail = det.str();
  return r;
}

// 6. Factorization gaps: zero at t = 0, N^{-1/2} decay at t = 1.
inline CriterionResult criterion_factorization(const Options& o, SweepCache& cache) {
  CriterionResult r{6, "factorization gap of two-particle marginals", false, "", 0, 600.0};
  if (!cache.sweep) {
    cache.config = detail::sweep_config(o.seed);
    cache.sweep = sweep_n(cache.config, o.threads);
  }
  const auto& sw = *cache.sweep;
  const auto bank = test_bank(cache.config.dim());
  std::vector<ParticlePair> pairs;
  for (const auto& per_n : sw.paths) {
    for (const auto& p : per_n) pairs.push_back(p.pair_t0);
  }
  const auto f = fresh_initial_samples(cache.config, 20000);
  bool ok = true;
  std::ostringstream det;
  det << "t=0 |gap|/stderr:";
  for (std::size_t g = 0; g < bank.size(); ++g) {
    const auto est = factorization_gap(pairs, f, bank[g], o.seed + g, cache.config.metrics.bootstrap);
    ok = ok && est.gap <= 2.0 * est.stderr_;
    det << " " << bank[g].name() << "=" << detail::fmt(est.gap / est.stderr_);
  }
  det << " (<= 2); t=1 slopes:";
  for (std::size_t g = 0; g < bank.size(); ++g) {
    const double slope = sw.report.gap_fits[g]->slope;
    bool decreasing = true;
    for (std::size_t k = 1; k < sw.report.rows.size(); ++k) {
      decreasing = decreasing && sw.report.rows[k].gaps[g].mean < sw.report.rows[k - 1].gaps[g].mean;
    }
    ok = ok && decreasing && slope >= -0.7 && slope <= -0.3;
    det << " " << bank[g].name() << "=" << detail::fmt(slope) << (decreasing ? "" : " (not decreasing)");
  }
  det << " (in [-0.7, -0.3])";
  r.passed = ok;
  r.detail = det.str();
  return r;
}

// 7. B-ensemble mean velocity tracks the mean-field current.
inline CriterionResult criterion_mean_field(const Options& o) {
  CriterionResult r{7, "B-ensemble mean follows the current ODE", false, "", 0, 60.0};
  const std::size_t n = 100000;
  const Kernel k = Kernel::uniform(Dim(2));
  const Vec3 E{0.5, 0.0};
  const CurrentParams p{E, 1.0, rho_k(k), Dim(2)};
  const auto cur = solve_current(p, Vec3{}, 2.0);
  SimulationOptions opt;
  opt.sample_dt = 0.01;
  const auto rec = run_b(make_initial(n, Dim(2), 1.0, InitialFamily::gaussian, o.seed), sample_history(n, 2.0, o.seed),
                         k, E, cur, opt);
  const double worst = *std::max_element(rec.b_current_error.begin(), rec.b_current_error.end());
  const double tol = 3.0 * std::sqrt(1.0 / static_cast<double>(n));
  r.passed = worst <= tol;
  r.detail = "max |j(V~) - j~| = " + detail::fmt(worst) + " over " + std::to_string(rec.sample_times.size()) +
             " sample times (tol " + detail::fmt(tol) + ")";
  return r;
}

// 8. Kinetic solver, current ODE and particles agree in d = 1.
inline CriterionResult criterion_triangle(const Options& o) {
  CriterionResult r{8, "kinetic PDE / current ODE / particles in d = 1", false, "", 0, 300.0};
  const double E = 1.0, v_max = 8.0;
  const double y_plus = (-1.0 + std::sqrt(5.0)) / 2.0;
  std::ostringstream det;

  // PDE against ODE on the fine grid.
  const VelocityGrid g0 = gaussian_grid(1.0, v_max, 2048);
  const Moments m0 = moments(g0);
  const CurrentParams p{Vec3{E}, m0.u, 1.0, Dim(1)};
  const auto ode = solve_current(p, Vec3{m0.j}, 20.0);
  const auto run = solve_vbe(g0, E, 20.0, ode, default_vbe_dt(g0, E, m0.u), 10);
  double dev = 0.0;
  for (std::size_t i = 0; i < run.times.size() && run.times[i] <= 5.0 + 1e-12; ++i) {
    dev = std::max(dev, std::abs(run.j_tilde[i] - ode.at(run.times[i])[0]));
  }
  const double tol = 5.0 * g0.dv * g0.dv + 5.0 * run.dt * run.dt;
  const double terminal = std::abs(run.j_tilde.back() - y_plus);
  bool ok = dev < tol && terminal < 1e-4;
  det << "max |j_PDE - j_ODE| on [0,5] = " << detail::fmt(dev) << " (tol " << detail::fmt(tol)
      << "), |j_PDE(20) - y+| = " << detail::fmt(terminal) << " (tol 1e-4); ";

  // W1 between the PDE density and B-process marginals.
  const double t_obs = 1.0;
  const Kernel k1 = Kernel::uniform(Dim(1));
  const auto cur_b = solve_current(CurrentParams{Vec3{E}, 1.0, 1.0, Dim(1)}, Vec3{}, t_obs);
  std::vector<W1Observation> obs;
  double c1_theory = 0.0;
  const std::size_t seeds = 10;
  for (std::size_t M : {std::size_t{512}, std::size_t{2048}}) {
    const VelocityGrid g = gaussian_grid(1.0, v_max, M);
    const Moments mg = moments(g);
    const auto ode_g = solve_current(CurrentParams{Vec3{E}, mg.u, 1.0, Dim(1)}, Vec3{mg.j}, t_obs);
    const auto pde = solve_vbe(g, E, t_obs, ode_g, default_vbe_dt(g, E, mg.u), 1000);
    const VelocityGrid& f1 = pde.final_state.grid;
    if (M == 2048) c1_theory = w1_sampling_constant(f1);
    for (std::size_t n : {std::size_t{1000}, std::size_t{10000}}) {
      auto w = parallel_map(seeds, o.threads, [&](std::size_t s) {
        const std::uint64_t seed = derive_seed(o.seed, n, static_cast<std::uint32_t>(s));
        SimulationOptions opt;
        opt.snapshot_times = {t_obs};
        const auto rec = run_b(make_initial(n, Dim(1), 1.0, InitialFamily::gaussian, seed),
                               sample_history(n, t_obs, seed), k1, Vec3{E}, cur_b, opt);
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = rec.snapshots.front().b.v[i][0];
        return w1_distance_1d(v, f1);
      });
      obs.push_back({static_cast<double>(n), g.dv, mean(w)});
    }
  }
  const W1Fit fit = fit_w1_model(obs);
  const bool fit_ok = fit.c1 >= 0.5 * c1_theory && fit.c1 <= 2.0 * c1_theory && fit.c2 <= 1.0 &&
                      fit.max_rel_residual <= 0.5;
  ok = ok && fit_ok;
  det << "W1 fit c1 = " << detail::fmt(fit.c1) << " (theory " << detail::fmt(c1_theory) << ", accepted x[0.5, 2]), c2 = "
      << detail::fmt(fit.c2) << " (<= 1), max relative residual " << detail::fmt(fit.max_rel_residual) << " (<= 0.5)";
  r.passed = ok;
  r.detail = det.str();
  return r;
}

// Independently evaluated log((2 + 2 sqrt 2) / (1 + 2 sqrt 2)).
inline constexpr double kDeltaOracle = 0.23206672112596227;

// 9. Fourth-moment envelope, energy-floor frequency, increment value.
inline CriterionResult criterion_bounds(const Options& o) {
  CriterionResult r{9, "bound audits: a(t) envelope, energy floor, increment", false, "", 0, 300.0};
  const Kernel k = Kernel::uniform(Dim(2));
  const Vec3 E{0.5, 0.0};
  const double T = 2.0;
  const CurrentParams p{E, 1.0, rho_k(k), Dim(2)};
  const auto cur = solve_current(p, Vec3{}, T);
  std::vector<CouplingRecord> records;
  const std::vector<std::size_t> ns{2, 4, 8, 32, 1000};
  for (std::size_t n : ns) {
    auto recs = parallel_map(200, o.threads, [&](std::size_t s) {
      const std::uint64_t seed = derive_seed(o.seed + 9, n, static_cast<std::uint32_t>(s));
      SimulationOptions opt;
      opt.sample_dt = 0.1;
      return run_b(make_initial(n, Dim(2), 1.0, InitialFamily::gaussian, seed), sample_history(n, T, seed), k, E, cur,
                   opt);
    });
    for (auto& rec : recs) records.push_back(std::move(rec));
  }
  AuditParams ap{1.0, 0.5, initial_fourth_moment(Dim(2), 1.0, InitialFamily::gaussian)};
  const BoundAudit audit = bound_audit(records, ap);
  // envelope audit on the large-N runs only
  std::vector<CouplingRecord> big;
  for (const auto& rec : records) {
    if (rec.n == 1000) big.push_back(rec);
  }
  const BoundAudit env = bound_audit(big, ap);
  const double delta = delta_increment(1.0, 1.0);
  const auto& last = audit.floor.back();
  r.passed = env.envelope_ok && audit.floor_monotone && last.events == 0 && std::abs(delta - kDeltaOracle) < 1e-6;
  std::ostringstream det;
  det << "floor frequency:";
  for (const auto& row : audit.floor) det << " N=" << row.n << ":" << row.events << "/" << row.runs;
  det << (audit.floor_monotone ? " (non-increasing)" : " (NOT monotone)");
  double worst_ratio = 0.0;
  for (const auto& row : env.envelope) worst_ratio = std::max(worst_ratio, row.mean_a / row.envelope);
  det << "; max a(t)/envelope = " << detail::fmt(worst_ratio) << (env.envelope_ok ? "" : " (violated)")
      << "; Delta(1,1) = " << delta << " vs " << kDeltaOracle;
  r.detail = det.str();
  return r;
}

// 10. Finite-difference Jacobian under the Lyapunov cap.
inline CriterionResult criterion_lyapunov(const Options& o) {
  CriterionResult r{10, "flow Jacobian under exp(4t/sqrt(u))", false, "", 0, 60.0};
  bool ok = true;
  double worst = 0.0;
  auto ratios = parallel_map(20, o.threads, [&](std::size_t s) {
    Ensemble e = make_initial(8, Dim(2), 1.0, InitialFamily::gaussian, derive_seed(o.seed + 10, 8, static_cast<std::uint32_t>(s)));
    const double scale = 1.0 / std::sqrt(energy_of(e.v));
    for (auto& v : e.v) v *= scale;
    double w = 0.0;
    for (double t : {0.1, 0.5, 1.0}) {
      const auto diag = lyapunov_check(e, Vec3{1.0, 0.0}, t);
      w = std::max(w, diag.jacobian_estimate / diag.lyapunov_cap);
    }
    return w;
  });
  for (double x : ratios) {
    worst = std::max(worst, x);
    ok = ok && x <= 1.05;
  }
  r.passed = ok;
  r.detail = "max estimate / cap over 20 ensembles x 3 times = " + detail::fmt(worst) + " (<= 1.05)";
  return r;
}

// 11. Bit-exact reproducibility, serial and threaded.
inline CriterionResult criterion_reproducibility(const Options& o) {
  CriterionResult r{11, "reproducibility across runs and thread counts", false, "", 0, 0.0};
  RunConfig c = detail::sweep_config(o.seed + 11);
  c.N = {100, 316};
  c.seeds = 8;
  c.horizon = 1.0;
  c.metrics.gap_time = 0.5;
  auto numbers = [](const SweepResult& s) {
    std::vector<double> xs;
    for (const auto& per_n : s.paths) {
      for (const auto& p : per_n) {
        xs.insert(xs.end(), {p.sup_distance, p.terminal_distance, p.max_iso_residual, p.b_energy_min, p.marginal_w1,
                             static_cast<double>(p.collisions)});
        xs.insert(xs.end(), p.gaps.begin(), p.gaps.end());
        xs.insert(xs.end(), p.record.distance.begin(), p.record.distance.end());
      }
    }
    xs.push_back(s.report.distance_fit->slope);
    return xs;
  };
  const auto a = numbers(sweep_n(c, 1));
  const auto b = numbers(sweep_n(c, 1));
  const auto t = numbers(sweep_n(c, std::max<std::size_t>(4, o.threads)));
  const bool serial_exact = a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
  double worst = 0.0;
  bool same_size = a.size() == t.size();
  for (std::size_t i = 0; same_size && i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - t[i]) / std::max(1e-300, std::abs(a[i])));
  }
  r.passed = serial_exact && same_size && worst <= 1e-12;
  r.detail = std::to_string(a.size()) + " numbers; serial repeat " + (serial_exact ? "bit-identical" : "DIFFERS") +
             "; 4-thread max relative difference " + detail::fmt(worst) + " (tol 1e-12)";
  return r;
}

inline std::vector<CriterionResult> run_all(const Options& o, const std::function<void(const CriterionResult&)>& report,
                                            const std::vector<int>& only = {}) {
  SweepCache cache;
  std::vector<std::function<CriterionResult()>> all{
      [&] { return criterion_rho(o); },          [&] { return criterion_current(o); },
      [&] { return criterion_energy(o); },       [&] { return criterion_isometry(o); },
      [&] { return criterion_scaling(o, cache); }, [&] { return criterion_factorization(o, cache); },
      [&] { return criterion_mean_field(o); },   [&] { return criterion_triangle(o); },
      [&] { return criterion_bounds(o); },       [&] { return criterion_lyapunov(o); },
      [&] { return criterion_reproducibility(o); }};
  std::vector<CriterionResult> out;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    CriterionResult res;
    try {
      res = all[i]();
    } catch (const std::exception& e) {
      res.id = id;
      res.title = "criterion " + std::to_string(id);
      res.detail = std::string("exception: ") + e.what();
    }
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (res.budget_seconds > 0.0 && res.seconds > res.budget_seconds) {
      res.passed = false;
      res.detail += "; runtime " + detail::fmt(res.seconds) + " s exceeds " + detail::fmt(res.budget_seconds) + " s";
    }
    if (report) report(res);
    out.push_back(std::move(res));
  }
  return out;
}

inline std::string format_line(const CriterionResult& r) {
  char head[96];
  std::snprintf(head, sizeof head, "[%s] %2d %-52s %8.2fs  ", r.passed ? "PASS" : "FAIL", r.id, r.title.c_str(),
                r.seconds);
  return head + r.detail;
}

}  // namespace thermochaos::acceptance
