#pragma once

// The mean-field current ODE
//   dj/dt = E - (E.j / u) j - rho_k j
// with its rest points and a dense-output solution.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "thermochaos/core.hpp"

namespace thermochaos {

struct CurrentParams {
  Vec3 E;
  double u_tilde = 1.0;
  double rho_k = 1.0;
  Dim d{1};

  void validate() const {
    if (!(u_tilde > 0.0)) throw Error(Errc::invalid_argument, "u_tilde must be positive");
    if (!(rho_k >= 0.0)) throw Error(Errc::invalid_argument, "rho_k must be nonnegative");
  }

  Vec3 rhs(const Vec3& j) const { return E - (dot(E, j) / u_tilde) * j - rho_k * j; }
};

struct FixedPoints {
  double y_minus;
  double y_plus;
};

inline FixedPoints fixed_points(const CurrentParams& p) {
  p.validate();
  const double e = norm(p.E);
  if (!(e > 0.0)) throw Error(Errc::zero_field, "fixed points are undefined for E = 0");
  const double root = std::sqrt(4.0 * e * e / p.u_tilde + p.rho_k * p.rho_k);
  const double scale = p.u_tilde / (2.0 * e);
  return {scale * (-p.rho_k - root), scale * (-p.rho_k + root)};
}

inline double default_current_dt(const CurrentParams& p) {
  const double e = norm(p.E);
  const double field_scale = e > 0.0 ? std::sqrt(p.u_tilde) / e : 1e300;
  return 1e-3 * std::min(field_scale, 1.0 / std::max(p.rho_k, 1.0));
}

class CurrentSolution {
 public:
  CurrentSolution() = default;

  const CurrentParams& params() const { return params_; }
  const std::vector<double>& times() const { return times_; }
  const std::vector<Vec3>& values() const { return j_; }
  double t_end() const { return times_.empty() ? 0.0 : times_.back(); }
  bool zero_field() const { return zero_field_; }

  // Parallel component y = j . E_hat (j_x when E = 0).
  double y_at_node(std::size_t k) const { return dot(j_[k], e_hat_); }
  Vec3 perp_at_node(std::size_t k) const { return j_[k] - y_at_node(k) * e_hat_; }
  const Vec3& e_hat() const { return e_hat_; }

  double y_plus() const { return y_plus_; }
  double y_minus() const { return y_minus_; }
  double terminal_gap() const { return zero_field_ ? norm(j_.back()) : std::abs(y_at_node(times_.size() - 1) - y_plus_); }

  // j(t) on [0, t_end]: cubic Hermite through the nodes with the ODE
  // right-hand side as slopes, or the exact decay when E = 0.
  Vec3 at(double t) const {
    const double slack = 1e-12 * std::max(1.0, t_end());
    if (times_.empty() || t < -slack || t > t_end() + slack) {
      throw Error(Errc::out_of_range, "current queried at t = " + std::to_string(t) + " outside [0, " +
                                          std::to_string(t_end()) + "]");
    }
    t = std::clamp(t, 0.0, t_end());
    if (zero_field_) return std::exp(-params_.rho_k * t) * j_.front();
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    std::size_t i = it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
    if (i + 1 >= times_.size()) return j_.back();
    const double h = times_[i + 1] - times_[i];
    const double s = (t - times_[i]) / h;
    const double s2 = s * s, s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s, h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
    return h00 * j_[i] + (h10 * h) * slope_[i] + h01 * j_[i + 1] + (h11 * h) * slope_[i + 1];
  }

  // Builds a solution from explicit nodes (used to audit arbitrary data).
  static CurrentSolution from_nodes(const CurrentParams& p, std::vector<double> times, std::vector<Vec3> values) {
    CurrentSolution s;
    s.params_ = p;
    s.times_ = std::move(times);
    s.j_ = std::move(values);
    s.finish();
    return s;
  }

 private:
  friend CurrentSolution solve_current(const CurrentParams&, const Vec3&, double, double);

  void finish() {
    const double e = norm(params_.E);
    zero_field_ = !(e > 0.0);
    e_hat_ = zero_field_ ? Vec3{1.0, 0.0, 0.0} : params_.E / e;
    slope_.resize(j_.size());
    for (std::size_t k = 0; k < j_.size(); ++k) slope_[k] = params_.rhs(j_[k]);
    if (!zero_field_) {
      const auto fp = fixed_points(params_);
      y_plus_ = fp.y_plus;
      y_minus_ = fp.y_minus;
    } else {
      y_plus_ = y_minus_ = 0.0;
    }
  }

  CurrentParams params_;
  std::vector<double> times_;
  std::vector<Vec3> j_;
  std::vector<Vec3> slope_;
  Vec3 e_hat_{1.0, 0.0, 0.0};
  double y_plus_ = 0.0;
  double y_minus_ = 0.0;
  bool zero_field_ = false;
};

// Fixed-step RK4 on [0, t_end]; the last step is shortened to land on t_end.
// dt <= 0 selects the default step.
inline CurrentSolution solve_current(const CurrentParams& params, const Vec3& j0, double t_end, double dt = 0.0) {
  params.validate();
  if (norm(j0) > std::sqrt(params.u_tilde) * (1.0 + 1e-12)) {
    throw Error(Errc::inadmissible_current, "|j0| exceeds sqrt(u_tilde)");
  }
  if (!(t_end >= 0.0)) throw Error(Errc::invalid_argument, "t_end must be nonnegative");
  if (dt <= 0.0) dt = default_current_dt(params);
  CurrentSolution sol;
  sol.params_ = params;
  const auto steps = static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9));
  sol.times_.reserve(steps + 1);
  sol.j_.reserve(steps + 1);
  sol.times_.push_back(0.0);
  sol.j_.push_back(j0);
  if (!(norm(params.E) > 0.0)) {
    for (std::size_t k = 1; k <= steps; ++k) {
      const double t = std::min(t_end, static_cast<double>(k) * dt);
      sol.times_.push_back(t);
      sol.j_.push_back(std::exp(-params.rho_k * t) * j0);
    }
    sol.finish();
    return sol;
  }
  Vec3 j = j0;
  for (std::size_t k = 1; k <= steps; ++k) {
    const double t0 = sol.times_.back();
    const double t1 = std::min(t_end, static_cast<double>(k) * dt);
    const double h = t1 - t0;
    const Vec3 k1 = params.rhs(j);
    const Vec3 k2 = params.rhs(j + (0.5 * h) * k1);
    const Vec3 k3 = params.rhs(j + (0.5 * h) * k2);
    const Vec3 k4 = params.rhs(j + h * k3);
    j = j + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    sol.times_.push_back(t1);
    sol.j_.push_back(j);
  }
  sol.finish();
  return sol;
}

// Largest |finite-difference dj/dt - rhs(j)| over interior nodes.
inline double current_residual(const CurrentSolution& sol, const CurrentParams& params) {
  const auto& t = sol.times();
  const auto& j = sol.values();
  if (t.size() < 3) throw Error(Errc::insufficient_data, "residual needs at least 3 time points");
  double worst = 0.0;
  for (std::size_t k = 1; k + 1 < t.size(); ++k) {
    const double h0 = t[k] - t[k - 1];
    const double h1 = t[k + 1] - t[k];
    // Three-point derivative on a possibly nonuniform grid.
    const Vec3 deriv = (-h1 / (h0 * (h0 + h1))) * j[k - 1] + ((h1 - h0) / (h0 * h1)) * j[k] +
                       (h0 / (h1 * (h0 + h1))) * j[k + 1];
    worst = std::max(worst, norm(deriv - params.rhs(j[k])));
  }
  return worst;
}

}  // namespace thermochaos
