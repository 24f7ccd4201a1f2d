#pragma once

// Between-collision dynamics.
//   A-flow: dv_i/dt = E - (E.j(V)/u(V)) v_i   (Gaussian thermostat, u conserved)
//   B-flow: dv_i/dt = E - (E.j~(t)/u~) v_i    (independent particles)
// Both act on every velocity by the same affine map, which AffineEnsemble
// exploits to advance N particles in O(1) per step.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "thermochaos/core.hpp"
#include "thermochaos/current.hpp"

namespace thermochaos {

struct Ensemble {
  Dim d{1};
  std::vector<Vec3> q;  // torus coordinates in [0, 1)^d
  std::vector<Vec3> v;

  std::size_t size() const { return v.size(); }
};

struct PhasePoint {
  Vec3 q;
  Vec3 v;
};

inline double wrap_unit(double x) {
  double y = x - std::floor(x);
  return y >= 1.0 ? 0.0 : y;
}

inline Vec3 wrap_unit(const Vec3& x, Dim d) {
  Vec3 out;
  for (int k = 0; k < d; ++k) out[k] = wrap_unit(x[k]);
  return out;
}

inline Vec3 current_of(std::span<const Vec3> v) {
  return pairwise_sum<Vec3>(v.size(), [&](std::size_t i) { return v[i]; }) / static_cast<double>(v.size());
}

inline double energy_of(std::span<const Vec3> v) {
  return pairwise_sum<double>(v.size(), [&](std::size_t i) { return norm2(v[i]); }) / static_cast<double>(v.size());
}

// ||V - W||_N = ((1/N) sum |v_i - w_i|^2)^{1/2}
inline double distance_n(std::span<const Vec3> v, std::span<const Vec3> w) {
  return std::sqrt(pairwise_sum<double>(v.size(), [&](std::size_t i) { return norm2(v[i] - w[i]); }) /
                   static_cast<double>(v.size()));
}

inline constexpr double kDegenerateEnergy = 1e-12;

inline std::vector<Vec3> force_a(std::span<const Vec3> v, const Vec3& E) {
  const double u = energy_of(v);
  if (!(u > kDegenerateEnergy)) throw Error(Errc::degenerate_ensemble, "u(V) is too small for the thermostat");
  const double alpha = dot(E, current_of(v)) / u;
  std::vector<Vec3> f(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) f[i] = E - alpha * v[i];
  return f;
}

// One RK4 step of the A-flow followed by the projection back onto the
// energy shell u(V) = u(V_before).
inline Ensemble step_a(const Ensemble& ens, const Vec3& E, double dt) {
  if (!(dt > 0.0)) throw Error(Errc::step_size, "dt must be positive");
  const std::size_t n = ens.size();
  const double u0 = energy_of(ens.v);
  auto stage = [&](const std::vector<Vec3>& base, const std::vector<Vec3>& k, double h) {
    std::vector<Vec3> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = base[i] + h * k[i];
    return out;
  };
  const auto k1 = force_a(ens.v, E);
  const auto v2 = stage(ens.v, k1, 0.5 * dt);
  const auto k2 = force_a(v2, E);
  const auto v3 = stage(ens.v, k2, 0.5 * dt);
  const auto k3 = force_a(v3, E);
  const auto v4 = stage(ens.v, k3, dt);
  const auto k4 = force_a(v4, E);

  Ensemble out{ens.d, std::vector<Vec3>(n), std::vector<Vec3>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    out.v[i] = ens.v[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    out.q[i] = wrap_unit(ens.q[i] + (dt / 6.0) * (ens.v[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]), ens.d);
  }
  const double u1 = energy_of(out.v);
  const double s = std::sqrt(u0 / u1);
  for (auto& x : out.v) x *= s;
  return out;
}

// B-flow coefficient alpha~(t) = E . j~(t) / u~.
inline double b_alpha(const CurrentSolution& current, const Vec3& E, double t) {
  return dot(E, current.at(t)) / current.params().u_tilde;
}

// One RK4 step of the B-flow on [t, t + dt]; no energy projection.
inline Ensemble step_b(const Ensemble& ens, const Vec3& E, const CurrentSolution& current, double t, double dt) {
  if (!(dt > 0.0)) throw Error(Errc::step_size, "dt must be positive");
  if (t + dt > current.t_end() * (1.0 + 1e-12) + 1e-12) {
    throw Error(Errc::out_of_range, "current does not cover [t, t + dt]");
  }
  const double a1 = b_alpha(current, E, t);
  const double a2 = b_alpha(current, E, t + 0.5 * dt);
  const double a3 = b_alpha(current, E, std::min(t + dt, current.t_end()));
  Ensemble out{ens.d, std::vector<Vec3>(ens.size()), std::vector<Vec3>(ens.size())};
  for (std::size_t i = 0; i < ens.size(); ++i) {
    const Vec3& v = ens.v[i];
    const Vec3 k1 = E - a1 * v;
    const Vec3 s2 = v + (0.5 * dt) * k1;
    const Vec3 k2 = E - a2 * s2;
    const Vec3 s3 = v + (0.5 * dt) * k2;
    const Vec3 k3 = E - a2 * s3;
    const Vec3 s4 = v + dt * k3;
    const Vec3 k4 = E - a3 * s4;
    out.v[i] = v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    out.q[i] = wrap_unit(ens.q[i] + (dt / 6.0) * (v + 2.0 * s2 + 2.0 * s3 + s4), ens.d);
  }
  return out;
}

inline double default_flow_dt(double u_tilde, const Vec3& E) {
  const double su = std::sqrt(u_tilde);
  return 1e-3 * su / std::max(norm(E), su);
}

// Velocities and positions held as
//   v_i = c w_i + b E,   q_i = q0_i + C w_i + B E   (mod 1),
// with the running sums S1 = mean(w), S2 = mean(|w|^2).
class AffineEnsemble {
 public:
  AffineEnsemble(const Ensemble& ens, const Vec3& E) : d_(ens.d), E_(E), w_(ens.v), q0_(ens.q) { rebuild_sums(); }

  std::size_t size() const { return w_.size(); }
  Dim dim() const { return d_; }

  Vec3 velocity(std::size_t i) const { return c_ * w_[i] + b_ * E_; }
  Vec3 position(std::size_t i) const { return wrap_unit(q0_[i] + C_ * w_[i] + B_ * E_, d_); }

  // Replaces v_i without moving q_i.
  void set_velocity(std::size_t i, const Vec3& v) {
    const Vec3 w_new = (v - b_ * E_) / c_;
    const double n = static_cast<double>(size());
    s1_ += (w_new - w_[i]) / n;
    s2_ += (norm2(w_new) - norm2(w_[i])) / n;
    q0_[i] += C_ * (w_[i] - w_new);
    w_[i] = w_new;
  }

  Vec3 current() const { return c_ * s1_ + b_ * E_; }
  double energy() const { return energy_at(c_, b_); }

  double energy_at(double c, double b) const {
    return c * c * s2_ + 2.0 * c * b * dot(E_, s1_) + b * b * norm2(E_);
  }
  Vec3 current_at(double c, double b) const { return c * s1_ + b * E_; }

  void velocities(std::vector<Vec3>& out) const {
    out.resize(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = velocity(i);
  }

  Ensemble materialize() const {
    Ensemble e{d_, std::vector<Vec3>(size()), std::vector<Vec3>(size())};
    for (std::size_t i = 0; i < size(); ++i) {
      e.v[i] = velocity(i);
      e.q[i] = position(i);
    }
    return e;
  }

  // Folds the affine coefficients into the stored particles.
  void renormalize() {
    for (std::size_t i = 0; i < size(); ++i) {
      const Vec3 v = velocity(i);
      q0_[i] = position(i);
      w_[i] = v;
    }
    c_ = 1.0;
    b_ = 0.0;
    C_ = 0.0;
    B_ = 0.0;
    rebuild_sums();
  }

  void maybe_renormalize(double speed_scale) {
    if (c_ < 0.5 || c_ > 2.0 || std::abs(b_) * norm(E_) > 2.0 * speed_scale || std::abs(C_) > 4.0 ||
        std::abs(B_) * norm(E_) > 4.0) {
      renormalize();
    }
  }

  // RK4 on (c, b, C, B) with dc/dt = -alpha c, db/dt = 1 - alpha b,
  // dC/dt = c, dB/dt = b; alpha_of(stage, c, b) supplies the coefficient.
  template <class Alpha>
  void rk4(double h, Alpha&& alpha_of) {
    const double c0 = c_, b0 = b_;
    const double a1 = alpha_of(0, c0, b0);
    const double dc1 = -a1 * c0, db1 = 1.0 - a1 * b0;
    const double c2 = c0 + 0.5 * h * dc1, b2 = b0 + 0.5 * h * db1;
    const double a2 = alpha_of(1, c2, b2);
    const double dc2 = -a2 * c2, db2 = 1.0 - a2 * b2;
    const double c3 = c0 + 0.5 * h * dc2, b3 = b0 + 0.5 * h * db2;
    const double a3 = alpha_of(2, c3, b3);
    const double dc3 = -a3 * c3, db3 = 1.0 - a3 * b3;
    const double c4 = c0 + h * dc3, b4 = b0 + h * db3;
    const double a4 = alpha_of(3, c4, b4);
    const double dc4 = -a4 * c4, db4 = 1.0 - a4 * b4;
    c_ = c0 + (h / 6.0) * (dc1 + 2.0 * dc2 + 2.0 * dc3 + dc4);
    b_ = b0 + (h / 6.0) * (db1 + 2.0 * db2 + 2.0 * db3 + db4);
    C_ += (h / 6.0) * (c0 + 2.0 * c2 + 2.0 * c3 + c4);
    B_ += (h / 6.0) * (b0 + 2.0 * b2 + 2.0 * b3 + b4);
  }

  // A-flow step; the result is rescaled onto u = u_target.
  void step_a(double h, double u_target) {
    rk4(h, [&](int, double c, double b) {
      const double u = energy_at(c, b);
      if (!(u > kDegenerateEnergy)) throw Error(Errc::degenerate_ensemble, "u(V) is too small for the thermostat");
      return dot(E_, current_at(c, b)) / u;
    });
    if (norm2(E_) == 0.0) return;  // free flight
    const double s = std::sqrt(u_target / energy());
    c_ *= s;
    b_ *= s;
  }

  void step_b(double t, double h, const CurrentSolution& current) {
    const double a1 = b_alpha(current, E_, t);
    const double a2 = b_alpha(current, E_, t + 0.5 * h);
    const double a3 = b_alpha(current, E_, std::min(t + h, current.t_end()));
    rk4(h, [&](int stage, double, double) { return stage == 0 ? a1 : (stage == 3 ? a3 : a2); });
  }

  void rebuild_sums() {
    const double n = static_cast<double>(size());
    s1_ = pairwise_sum<Vec3>(size(), [&](std::size_t i) { return w_[i]; }) / n;
    s2_ = pairwise_sum<double>(size(), [&](std::size_t i) { return norm2(w_[i]); }) / n;
  }

 private:
  Dim d_;
  Vec3 E_;
  std::vector<Vec3> w_;
  std::vector<Vec3> q0_;
  double c_ = 1.0, b_ = 0.0, C_ = 0.0, B_ = 0.0;
  Vec3 s1_;
  double s2_ = 0.0;
};

struct FlowDiagnostics {
  double u_drift = 0.0;
  double lyapunov_cap = 1.0;
  double jacobian_estimate = 1.0;
};

inline constexpr std::size_t kLyapunovMaxParticles = 64;

// Central-difference estimate of the velocity Jacobian of the A-flow over
// [0, t], measured in the ||.||_N operator norm (the largest singular value,
// since the 1/N factors cancel), against the cap exp(4 t / sqrt(u(V))).
inline FlowDiagnostics lyapunov_check(const Ensemble& ens, const Vec3& E, double t, double dt = 1e-3) {
  const std::size_t n = ens.size();
  if (n > kLyapunovMaxParticles) {
    throw Error(Errc::resource_guard, "finite-difference Jacobian limited to N <= 64");
  }
  const int d = ens.d;
  const std::size_t dim = n * static_cast<std::size_t>(d);
  const double u = energy_of(ens.v);
  FlowDiagnostics diag;
  diag.lyapunov_cap = std::exp(4.0 * t / std::sqrt(u));
  if (t <= 0.0) return diag;

  auto flow = [&](const Ensemble& start) {
    Ensemble cur = start;
    const auto steps = static_cast<std::size_t>(std::ceil(t / dt - 1e-9));
    const double h = t / static_cast<double>(steps);
    for (std::size_t k = 0; k < steps; ++k) cur = step_a(cur, E, h);
    return cur;
  };
  const Ensemble base = flow(ens);
  diag.u_drift = std::abs(energy_of(base.v) - u);

  const double eps = 1e-6 * std::sqrt(u);
  Eigen::MatrixXd jac(dim, dim);
  for (std::size_t col = 0; col < dim; ++col) {
    Ensemble plus = ens, minus = ens;
    plus.v[col / d][col % d] += eps;
    minus.v[col / d][col % d] -= eps;
    const Ensemble fp = flow(plus);
    const Ensemble fm = flow(minus);
    for (std::size_t row = 0; row < dim; ++row) {
      jac(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) =
          (fp.v[row / d][row % d] - fm.v[row / d][row % d]) / (2.0 * eps);
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac);
  diag.jacobian_estimate = svd.singularValues()(0);
  return diag;
}

}  // namespace thermochaos
