#pragma once

// Event-driven simulation of the interacting (A) and mean-field (B)
// processes on one shared collision history.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "thermochaos/core.hpp"
#include "thermochaos/current.hpp"
#include "thermochaos/flows.hpp"
#include "thermochaos/kernel.hpp"
#include "thermochaos/random.hpp"

namespace thermochaos {

struct CollisionEvent {
  double t;
  std::uint32_t particle;
  std::array<double, 2> variates;  // polar / azimuth uniforms (d = 1 uses [0])
};

struct CollisionHistory {
  std::size_t n_particles = 0;
  double horizon = 0.0;
  std::vector<CollisionEvent> events;
};

// Superposition of N unit-rate Poisson clocks: Exp(N) gaps, uniform particle
// index. Event k draws everything from its own key, so A and B consume the
// same randomness.
inline CollisionHistory sample_history(std::size_t n, double horizon, std::uint64_t seed) {
  if (n < 1) throw Error(Errc::invalid_argument, "N must be >= 1");
  if (!(horizon >= 0.0)) throw Error(Errc::invalid_argument, "horizon must be nonnegative");
  CollisionHistory h{n, horizon, {}};
  if (horizon == 0.0) return h;
  h.events.reserve(static_cast<std::size_t>(static_cast<double>(n) * horizon * 1.05 + 16.0));
  const RandomStream base(seed, Purpose::history);
  double t = 0.0;
  for (std::uint64_t k = 0;; ++k) {
    RandomStream rng = base.substream(0, k);
    t += rng.exponential(static_cast<double>(n));
    if (!(t < horizon)) break;
    const std::uint32_t i = rng.below(static_cast<std::uint32_t>(n));
    const double u1 = rng.uniform();
    const double u2 = rng.uniform();
    h.events.push_back({t, i, {u1, u2}});
  }
  return h;
}

enum class InitialFamily { gaussian, shell };

// Product initial data: isotropic Gaussian with variance u~/d per component,
// or speed sqrt(u~) with uniform direction; positions uniform on the torus.
inline Ensemble make_initial(std::size_t n, Dim d, double u_tilde, InitialFamily family, std::uint64_t seed) {
  Ensemble e{d, std::vector<Vec3>(n), std::vector<Vec3>(n)};
  const double sigma = std::sqrt(u_tilde / d);
  for (std::size_t i = 0; i < n; ++i) {
    RandomStream rv(seed, Purpose::initial_velocity, static_cast<std::uint32_t>(i));
    RandomStream rq(seed, Purpose::initial_position, static_cast<std::uint32_t>(i));
    Vec3 v;
    for (int k = 0; k < d; ++k) v[k] = rv.normal();
    if (family == InitialFamily::gaussian) {
      v *= sigma;
    } else {
      const double nv = norm(v);
      v = nv > 0 ? (std::sqrt(u_tilde) / nv) * v : Vec3{std::sqrt(u_tilde)};
    }
    e.v[i] = v;
    for (int k = 0; k < d; ++k) e.q[i][k] = rq.uniform();
  }
  return e;
}

// Fourth central moment a = E(|v|^2 - u~)^2 of the initial family.
inline double initial_fourth_moment(Dim d, double u_tilde, InitialFamily family) {
  if (family == InitialFamily::shell) return 0.0;
  return 2.0 * u_tilde * u_tilde / d;
}

// Outgoing velocity of a virtual collision driven by pre-drawn variates.
inline Vec3 collide(const Kernel& kernel, const Vec3& v, const std::array<double, 2>& variates) {
  const Dim d = kernel.dim();
  if (d == 1) return Vec3{collide_1d(v[0], variates[0])};
  const double speed = norm(v);
  if (!(speed > 0.0)) return v;
  const UnitVector v_hat(v, d);
  return reflect(v, direction_from_variates(kernel, v_hat, variates[0], variates[1]));
}

struct SimulationOptions {
  double dt = 0.0;         // flow substep cap; <= 0 selects the default
  double sample_dt = 0.0;  // <= 0 samples only at 0 and the horizon
  std::vector<double> snapshot_times;
  std::size_t snapshot_particles = 0;  // 0 keeps every particle
  bool brute_force_isometry = false;
  bool keep_iso_residuals = true;
};

struct Snapshot {
  double t = 0.0;
  Ensemble a;
  Ensemble b;
};

struct CouplingRecord {
  bool has_a = false;
  bool has_b = false;
  std::size_t n = 0;
  Dim d{1};
  double u_tilde = 1.0;

  std::vector<double> sample_times;
  std::vector<double> distance;          // ||V - V~||_N
  std::vector<double> a_energy;          // u(V)
  std::vector<double> b_energy;          // u(V~)
  std::vector<double> b_current_error;   // |j(V~) - j~(t)|
  std::vector<double> b_fourth_moment;   // (1/N) sum (|v~|^2 - u~)^2
  std::vector<Vec3> b_current;

  std::vector<double> iso_residuals;
  double max_iso_residual = 0.0;
  std::size_t collisions = 0;       // events that changed the A velocity
  std::size_t noop_collisions = 0;  // events that left the velocities unchanged
  std::size_t substeps = 0;

  double b_energy_min = 0.0;        // inf_s sqrt(u(V~_s)) over substep endpoints
  bool energy_floor_event = false;  // b_energy_min <= sqrt(u~) / (2 sqrt 2)

  std::vector<Snapshot> snapshots;

  double sup_distance() const { return distance.empty() ? 0.0 : *std::max_element(distance.begin(), distance.end()); }
  double terminal_distance() const { return distance.empty() ? 0.0 : distance.back(); }
};

inline double energy_floor(double u_tilde) { return std::sqrt(u_tilde) / (2.0 * std::numbers::sqrt2); }

namespace detail {

inline std::vector<double> sample_grid(double horizon, double sample_dt) {
  std::vector<double> grid{0.0};
  if (sample_dt > 0.0) {
    for (std::size_t k = 1;; ++k) {
      const double t = static_cast<double>(k) * sample_dt;
      if (t >= horizon - 1e-12 * std::max(1.0, horizon)) break;
      grid.push_back(t);
    }
  }
  if (horizon > 0.0) grid.push_back(horizon);
  return grid;
}

inline Ensemble truncated(const Ensemble& e, std::size_t keep) {
  if (keep == 0 || keep >= e.size()) return e;
  Ensemble out{e.d, std::vector<Vec3>(e.q.begin(), e.q.begin() + static_cast<std::ptrdiff_t>(keep)),
               std::vector<Vec3>(e.v.begin(), e.v.begin() + static_cast<std::ptrdiff_t>(keep))};
  return out;
}

// Shared driver. A runs when with_a; B runs when current != nullptr. When
// both run, each B collision is matched to the A collision.
class PathDriver {
 public:
  PathDriver(const Ensemble& v0, const CollisionHistory& history, const Kernel& kernel, const Vec3& E,
             const CurrentSolution* current, bool with_a, const SimulationOptions& options, double u_tilde)
      : history_(history), kernel_(kernel), E_(E), current_(current), opt_(options), a_(v0, E), b_(v0, E) {
    if (v0.size() != history.n_particles) throw Error(Errc::invalid_argument, "history and ensemble sizes differ");
    if (!(v0.d == kernel.dim())) throw Error(Errc::invalid_argument, "ensemble and kernel dimensions differ");
    rec_.has_a = with_a;
    rec_.has_b = current != nullptr;
    rec_.n = v0.size();
    rec_.d = v0.d;
    rec_.u_tilde = u_tilde;
    u_a_ = energy_of(v0.v);
    if (with_a && !(u_a_ > kDegenerateEnergy * u_tilde)) {
      throw Error(Errc::degenerate_ensemble, "initial ensemble has u(V) ~ 0");
    }
    if (rec_.has_b && current->t_end() < history.horizon * (1.0 - 1e-12)) {
      throw Error(Errc::out_of_range, "current solution does not cover the horizon");
    }
    dt_ = opt_.dt > 0.0 ? opt_.dt : default_flow_dt(u_tilde, E);
    speed_scale_ = std::sqrt(u_tilde);
  }

  CouplingRecord run() {
    const double horizon = history_.horizon;
    auto samples = sample_grid(horizon, opt_.sample_dt);
    auto snaps = opt_.snapshot_times;
    std::sort(snaps.begin(), snaps.end());
    for (double s : snaps) {
      if (s < 0.0 || s > horizon * (1.0 + 1e-12)) throw Error(Errc::out_of_range, "snapshot time beyond horizon");
    }
    rec_.b_energy_min = rec_.has_b ? std::sqrt(b_.energy()) : 0.0;

    std::size_t next_sample = 0, next_snap = 0, next_event = 0;
    double t = 0.0;
    const auto& events = history_.events;
    while (true) {
      const double ts = next_sample < samples.size() ? samples[next_sample] : INFINITY;
      const double tn = next_snap < snaps.size() ? snaps[next_snap] : INFINITY;
      const double te = next_event < events.size() ? events[next_event].t : INFINITY;
      const double target = std::min({ts, tn, te});
      if (!std::isfinite(target)) break;
      advance(t, target);
      t = target;
      if (target == ts) {
        record_sample(t);
        ++next_sample;
      } else if (target == tn) {
        take_snapshot(t);
        ++next_snap;
      } else {
        apply_event(events[next_event]);
        ++next_event;
      }
    }
    rec_.energy_floor_event = rec_.has_b && rec_.b_energy_min <= energy_floor(rec_.u_tilde);
    return std::move(rec_);
  }

 private:
  void advance(double t0, double t1) {
    double t = t0;
    while (t1 - t > 1e-14 * std::max(1.0, t1)) {
      const double h = (t1 - t) > dt_ * (1.0 + 1e-9) ? dt_ : (t1 - t);
      if (rec_.has_a) {
        a_.step_a(h, u_a_);
        a_.maybe_renormalize(speed_scale_);
      }
      if (rec_.has_b) {
        b_.step_b(t, h, *current_);
        b_.maybe_renormalize(speed_scale_);
        rec_.b_energy_min = std::min(rec_.b_energy_min, std::sqrt(std::max(0.0, b_.energy())));
      }
      ++rec_.substeps;
      t += h;
    }
  }

  void record_sample(double t) {
    rec_.sample_times.push_back(t);
    if (rec_.has_a) {
      a_.velocities(va_);
      rec_.a_energy.push_back(energy_of(va_));
    }
    if (rec_.has_b) {
      b_.velocities(vb_);
      const Vec3 jb = current_of(vb_);
      rec_.b_current.push_back(jb);
      rec_.b_energy.push_back(energy_of(vb_));
      rec_.b_current_error.push_back(norm(jb - current_->at(t)));
      const double ut = rec_.u_tilde;
      rec_.b_fourth_moment.push_back(pairwise_sum<double>(vb_.size(), [&](std::size_t i) {
                                       const double x = norm2(vb_[i]) - ut;
                                       return x * x;
                                     }) /
                                     static_cast<double>(vb_.size()));
    }
    if (rec_.has_a && rec_.has_b) rec_.distance.push_back(distance_n(va_, vb_));
  }

  void take_snapshot(double t) {
    Snapshot s;
    s.t = t;
    if (rec_.has_a) s.a = truncated(a_.materialize(), opt_.snapshot_particles);
    if (rec_.has_b) s.b = truncated(b_.materialize(), opt_.snapshot_particles);
    rec_.snapshots.push_back(std::move(s));
  }

  void apply_event(const CollisionEvent& ev) {
    const std::size_t i = ev.particle;
    const Dim d = kernel_.dim();
    if (!rec_.has_a) {
      const Vec3 w = b_.velocity(i);
      const Vec3 w_out = collide(kernel_, w, ev.variates);
      if (w_out == w) {
        ++rec_.noop_collisions;
      } else {
        ++rec_.collisions;
        b_.set_velocity(i, w_out);
      }
      return;
    }
    const Vec3 v = a_.velocity(i);
    const Vec3 v_out = collide(kernel_, v, ev.variates);
    if (v_out == v) {
      ++rec_.noop_collisions;
      return;
    }
    ++rec_.collisions;
    if (!rec_.has_b) {
      a_.set_velocity(i, v_out);
      return;
    }
    const Vec3 w = b_.velocity(i);
    const double speed_w = norm(w);
    Vec3 w_out = w;
    if (w == v) {
      w_out = v_out;  // coincident particles stay coincident
    } else if (speed_w > 0.0) {
      const UnitVector w_hat_out = match_collision(UnitVector(v, d), UnitVector(v_out, d), UnitVector(w, d));
      w_out = speed_w * w_hat_out.vec();
    }
    double residual;
    if (opt_.brute_force_isometry) {
      a_.velocities(va_);
      b_.velocities(vb_);
      const double before = distance_n(va_, vb_);
      a_.set_velocity(i, v_out);
      b_.set_velocity(i, w_out);
      a_.velocities(va_);
      b_.velocities(vb_);
      residual = std::abs(distance_n(va_, vb_) - before);
    } else {
      // | ||V+ - V~+||_N - ||V- - V~-||_N | <= | |v'-w'| - |v-w| | / sqrt(N)
      residual = std::abs(norm(v_out - w_out) - norm(v - w)) / std::sqrt(static_cast<double>(rec_.n));
      a_.set_velocity(i, v_out);
      b_.set_velocity(i, w_out);
    }
    rec_.max_iso_residual = std::max(rec_.max_iso_residual, residual);
    if (opt_.keep_iso_residuals) rec_.iso_residuals.push_back(residual);
  }

  const CollisionHistory& history_;
  const Kernel& kernel_;
  Vec3 E_;
  const CurrentSolution* current_;
  SimulationOptions opt_;
  AffineEnsemble a_;
  AffineEnsemble b_;
  CouplingRecord rec_;
  double u_a_ = 0.0;
  double dt_ = 1e-3;
  double speed_scale_ = 1.0;
  std::vector<Vec3> va_, vb_;
};

}  // namespace detail

struct Trajectory {
  std::vector<double> times;
  std::vector<Ensemble> states;
};

// The A-process path: A-flow segments interleaved with reflections.
inline Trajectory run_a(const Ensemble& v0, const CollisionHistory& history, const Kernel& kernel, const Vec3& E,
                        SimulationOptions options = {}) {
  options.snapshot_times = detail::sample_grid(history.horizon, options.sample_dt);
  options.snapshot_particles = 0;
  const double u = energy_of(v0.v);
  const double bytes = static_cast<double>(v0.size()) * 48.0 * static_cast<double>(options.snapshot_times.size());
  if (bytes > 4e9) throw Error(Errc::resource_guard, "trajectory would exceed 4 GB; increase sample_dt");
  detail::PathDriver driver(v0, history, kernel, E, nullptr, true, options, u > 0 ? u : 1.0);
  CouplingRecord rec = driver.run();
  Trajectory tr;
  for (auto& s : rec.snapshots) {
    tr.times.push_back(s.t);
    tr.states.push_back(std::move(s.a));
  }
  return tr;
}

// The B-process alone; collisions follow the kernel law directly.
inline CouplingRecord run_b(const Ensemble& v0, const CollisionHistory& history, const Kernel& kernel, const Vec3& E,
                            const CurrentSolution& current, const SimulationOptions& options = {}) {
  detail::PathDriver driver(v0, history, kernel, E, &current, false, options, current.params().u_tilde);
  return driver.run();
}

// A and B side by side from the same V0; B collisions are matched to A's.
inline CouplingRecord run_coupled(const Ensemble& v0, const CollisionHistory& history, const Kernel& kernel,
                                  const Vec3& E, const CurrentSolution& current, const SimulationOptions& options = {}) {
  detail::PathDriver driver(v0, history, kernel, E, &current, true, options, current.params().u_tilde);
  return driver.run();
}

// Single-particle phase points at the sample time nearest t.
inline std::vector<PhasePoint> marginal_samples(const Trajectory& tr, double t) {
  if (tr.times.empty()) throw Error(Errc::insufficient_data, "empty trajectory");
  const double slack = 1e-12 * std::max(1.0, tr.times.back());
  if (t < tr.times.front() - slack || t > tr.times.back() + slack) {
    throw Error(Errc::out_of_range, "t outside the trajectory");
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < tr.times.size(); ++k) {
    if (std::abs(tr.times[k] - t) < std::abs(tr.times[best] - t)) best = k;
  }
  const Ensemble& e = tr.states[best];
  std::vector<PhasePoint> out(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) out[i] = {e.q[i], e.v[i]};
  return out;
}

}  // namespace thermochaos
