#pragma once

// Collision kernel k on [-1, 1], direction sampling, reflections and the
// matched collision that couples the interacting and mean-field processes.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "thermochaos/core.hpp"
#include "thermochaos/random.hpp"

namespace thermochaos {

// Unit vector in the active dimension; normalized on construction.
class UnitVector {
 public:
  UnitVector(const Vec3& v, Dim d) : d_(d) {
    const double n = norm(v);
    if (!(n > 0.0) || !std::isfinite(n)) throw Error(Errc::invalid_argument, "cannot normalize a zero vector");
    v_ = v / n;
    for (int k = d; k < 3; ++k) v_[k] = 0.0;
  }
  const Vec3& vec() const { return v_; }
  double operator[](std::size_t i) const { return v_[i]; }
  Dim dim() const { return d_; }

 private:
  Vec3 v_;
  Dim d_;
};

// |S^{d-2}|: the measure of the sphere of azimuths around a fixed axis.
inline double azimuthal_measure(Dim d) {
  switch (d.value()) {
    case 2: return 2.0;
    case 3: return 2.0 * std::numbers::pi;
    default: throw Error(Errc::unsupported_dimension, "azimuthal measure needs d >= 2");
  }
}

// |S^{d-1}|
inline double sphere_measure(Dim d) {
  switch (d.value()) {
    case 1: return 2.0;
    case 2: return 2.0 * std::numbers::pi;
    default: return 4.0 * std::numbers::pi;
  }
}

namespace detail {

template <class F>
double integrate(F&& f, double a, double b, double abs_tol, double* error_out = nullptr) {
  if (b <= a) return 0.0;
  double err = 0.0;
  const double value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, 1e-12, &err);
  if (error_out) *error_out = err;
  if (!(err <= abs_tol) || !std::isfinite(value)) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", err);
    throw Error(Errc::numeric, std::string("adaptive quadrature did not reach tolerance (error estimate ") + buf + ")");
  }
  return value;
}

// Fixed 30-point Gauss-Legendre on a short smooth interval; the 15-point
// rule supplies the error estimate.
template <class F>
double integrate_cell(F&& f, double a, double b, double abs_tol) {
  if (b <= a) return 0.0;
  const double fine = boost::math::quadrature::gauss<double, 30>::integrate(f, a, b);
  const double coarse = boost::math::quadrature::gauss<double, 15>::integrate(f, a, b);
  if (!(std::abs(fine - coarse) <= abs_tol) || !std::isfinite(fine)) {
    throw Error(Errc::numeric, "cell quadrature did not reach tolerance");
  }
  return fine;
}

// Integrates over [a, b] split at the given (sorted) breakpoints.
template <class F>
double integrate_pieces(F&& f, double a, double b, const std::vector<double>& breaks, double abs_tol) {
  double total = 0.0;
  double lo = a;
  for (double x : breaks) {
    if (x <= lo || x >= b) continue;
    total += integrate(f, lo, x, abs_tol);
    lo = x;
  }
  return total + integrate(f, lo, b, abs_tol);
}

}  // namespace detail

class Kernel {
 public:
  struct Uniform {};
  struct Table {
    std::vector<double> nodes;   // cos(theta) abscissae, strictly increasing in [-1, 1]
    std::vector<double> values;  // raw k at the nodes
  };

  static Kernel uniform(Dim d) { return Kernel(d, Uniform{}); }

  // Piecewise-linear table, zero outside [nodes.front(), nodes.back()],
  // symmetrized as (k(x) + k(-x)) / 2 and normalized over the sphere.
  static Kernel table(Dim d, std::vector<double> nodes, std::vector<double> values) {
    if (nodes.size() != values.size() || nodes.size() < 2) {
      throw Error(Errc::normalization, "kernel table needs at least two nodes and matching values");
    }
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (!(nodes[i] >= -1.0 && nodes[i] <= 1.0)) {
        throw Error(Errc::normalization, "kernel node " + std::to_string(i) + " outside [-1, 1]");
      }
      if (i > 0 && !(nodes[i] > nodes[i - 1])) {
        throw Error(Errc::normalization, "kernel nodes must be strictly increasing (node " + std::to_string(i) + ")");
      }
      if (!(values[i] >= 0.0) || !std::isfinite(values[i])) {
        throw Error(Errc::normalization, "kernel value at node " + std::to_string(i) + " (cos theta = " +
                                             std::to_string(nodes[i]) + ") is negative or not finite");
      }
    }
    return Kernel(d, Table{std::move(nodes), std::move(values)});
  }

  Dim dim() const { return d_; }
  bool is_uniform() const { return std::holds_alternative<Uniform>(shape_); }
  const std::variant<Uniform, Table>& shape() const { return shape_; }

  // Normalized density at x = v_hat . n_hat.
  double operator()(double x) const { return scale_ * raw_symmetric(x); }

  // Breakpoints of the density in theta = acos(x), ascending.
  const std::vector<double>& theta_breaks() const { return theta_breaks_; }

  // Integral of k(v_hat . n_hat) over the unit sphere; 1 after construction.
  double sphere_integral() const {
    if (d_ == 1) return (*this)(1.0) + (*this)(-1.0);
    const double s = azimuthal_measure(d_);
    const int d = d_;
    auto f = [&](double th) { return (*this)(std::cos(th)) * sin_power(th, d - 2); };
    return s * detail::integrate_pieces(f, 0.0, std::numbers::pi, theta_breaks_, 1e-12);
  }

  // Polar-angle density over [0, pi], including the azimuthal measure.
  double theta_density(double theta) const {
    return azimuthal_measure(d_) * (*this)(std::cos(theta)) * sin_power(theta, d_ - 2);
  }

  // Inverse-CDF tabulation of theta (d >= 2).
  struct CdfTable {
    std::vector<double> theta;
    std::vector<double> cdf;
    std::vector<double> slope;  // d cdf / d theta, Fritsch-Carlson limited

    // Solves cdf(theta) = u inside the bracketing cell.
    double invert(double u) const {
      auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
      std::size_t i = it == cdf.begin() ? 0 : static_cast<std::size_t>(it - cdf.begin()) - 1;
      if (i + 1 >= cdf.size()) i = cdf.size() - 2;
      const double h = theta[i + 1] - theta[i];
      const double c0 = cdf[i];
      const double c1 = cdf[i + 1];
      if (!(c1 > c0)) return theta[i];
      const double m0 = slope[i] * h;
      const double m1 = slope[i + 1] * h;
      auto hermite = [&](double s) {
        const double s2 = s * s, s3 = s2 * s;
        return (2 * s3 - 3 * s2 + 1) * c0 + (s3 - 2 * s2 + s) * m0 + (-2 * s3 + 3 * s2) * c1 + (s3 - s2) * m1;
      };
      auto dhermite = [&](double s) {
        const double s2 = s * s;
        return (6 * s2 - 6 * s) * c0 + (3 * s2 - 4 * s + 1) * m0 + (-6 * s2 + 6 * s) * c1 + (3 * s2 - 2 * s) * m1;
      };
      double lo = 0.0, hi = 1.0;
      double s = (u - c0) / (c1 - c0);
      for (int iter = 0; iter < 60; ++iter) {
        const double g = hermite(s) - u;
        if (g > 0) hi = s; else lo = s;
        const double dg = dhermite(s);
        double next = dg > 0 ? s - g / dg : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - s) < 1e-15) {
          s = next;
          break;
        }
        s = next;
      }
      return theta[i] + s * h;
    }

    // P(theta' <= theta) by Hermite evaluation.
    double evaluate(double th) const {
      if (th <= theta.front()) return 0.0;
      if (th >= theta.back()) return 1.0;
      auto it = std::upper_bound(theta.begin(), theta.end(), th);
      const std::size_t i = static_cast<std::size_t>(it - theta.begin()) - 1;
      const double h = theta[i + 1] - theta[i];
      const double s = (th - theta[i]) / h;
      const double s2 = s * s, s3 = s2 * s;
      return (2 * s3 - 3 * s2 + 1) * cdf[i] + (s3 - 2 * s2 + s) * slope[i] * h + (-2 * s3 + 3 * s2) * cdf[i + 1] +
             (s3 - s2) * slope[i + 1] * h;
    }
  };

  const CdfTable& cdf_table() const {
    if (d_ == 1) throw Error(Errc::unsupported_dimension, "no angular table for d = 1");
    return cdf_;
  }

  static constexpr int kTableCells = 4096;

 private:
  Kernel(Dim d, std::variant<Uniform, Table> shape) : d_(d), shape_(std::move(shape)) {
    if (const auto* t = std::get_if<Table>(&shape_)) {
      std::vector<double> th;
      for (double x : t->nodes) {
        th.push_back(std::acos(std::clamp(x, -1.0, 1.0)));
        th.push_back(std::acos(std::clamp(-x, -1.0, 1.0)));
      }
      std::sort(th.begin(), th.end());
      th.erase(std::unique(th.begin(), th.end()), th.end());
      for (double x : th) {
        if (x > 0.0 && x < std::numbers::pi) theta_breaks_.push_back(x);
      }
    }
    const double z = raw_sphere_integral();
    if (!(z > 0.0) || !std::isfinite(z)) throw Error(Errc::normalization, "kernel has zero mass on the sphere");
    scale_ = 1.0 / z;
    if (std::abs(sphere_integral() - 1.0) > 1e-10) {
      throw Error(Errc::normalization, "kernel normalization failed");
    }
    if (d_ >= 2) build_table();
  }

  static double sin_power(double th, int p) {
    if (p == 0) return 1.0;
    return std::pow(std::sin(th), p);
  }

  double raw(double x) const {
    if (std::holds_alternative<Uniform>(shape_)) return 1.0;
    const auto& t = std::get<Table>(shape_);
    if (x < t.nodes.front() || x > t.nodes.back()) return 0.0;
    auto it = std::upper_bound(t.nodes.begin(), t.nodes.end(), x);
    if (it == t.nodes.end()) return t.values.back();
    const std::size_t i = static_cast<std::size_t>(it - t.nodes.begin());
    if (i == 0) return t.values.front();
    const double x0 = t.nodes[i - 1], x1 = t.nodes[i];
    const double w = (x - x0) / (x1 - x0);
    return (1.0 - w) * t.values[i - 1] + w * t.values[i];
  }

  double raw_symmetric(double x) const { return 0.5 * (raw(x) + raw(-x)); }

  double raw_sphere_integral() const {
    if (d_ == 1) return raw_symmetric(1.0) + raw_symmetric(-1.0);
    if (is_uniform()) return sphere_measure(d_);
    const int d = d_;
    auto f = [&](double th) { return raw_symmetric(std::cos(th)) * sin_power(th, d - 2); };
    return azimuthal_measure(d_) * detail::integrate_pieces(f, 0.0, std::numbers::pi, theta_breaks_, 1e-12);
  }

  void build_table() {
    std::vector<double> grid;
    grid.reserve(kTableCells + 1 + theta_breaks_.size());
    for (int i = 0; i <= kTableCells; ++i) grid.push_back(std::numbers::pi * i / kTableCells);
    grid.insert(grid.end(), theta_breaks_.begin(), theta_breaks_.end());
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end(), [](double a, double b) { return std::abs(a - b) < 1e-14; }),
               grid.end());
    grid.back() = std::numbers::pi;

    auto dens = [&](double th) { return theta_density(th); };
    std::vector<double> cdf(grid.size(), 0.0);
    for (std::size_t i = 1; i < grid.size(); ++i) {
      cdf[i] = cdf[i - 1] + detail::integrate_cell(dens, grid[i - 1], grid[i], 1e-13);
    }
    const double total = cdf.back();
    for (auto& c : cdf) c /= total;
    cdf.back() = 1.0;

    std::vector<double> slope(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) slope[i] = dens(grid[i]) / total;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
      const double h = grid[i + 1] - grid[i];
      const double secant = (cdf[i + 1] - cdf[i]) / h;
      if (secant <= 0.0) {
        slope[i] = 0.0;
        slope[i + 1] = 0.0;
        continue;
      }
      const double a = slope[i] / secant;
      const double b = slope[i + 1] / secant;
      const double r = a * a + b * b;
      if (r > 9.0) {
        const double tau = 3.0 / std::sqrt(r);
        slope[i] = tau * a * secant;
        slope[i + 1] = tau * b * secant;
      }
    }
    cdf_ = CdfTable{std::move(grid), std::move(cdf), std::move(slope)};
  }

  Dim d_;
  std::variant<Uniform, Table> shape_;
  std::vector<double> theta_breaks_;
  double scale_ = 1.0;
  CdfTable cdf_;
};

// rho_k = 2 |S^{d-2}| int_0^pi k(cos t) cos^2 t sin^{d-2} t dt, and 1 for d = 1.
inline double rho_k(const Kernel& kernel) {
  const Dim d = kernel.dim();
  if (d == 1) return 1.0;
  if (std::abs(kernel.sphere_integral() - 1.0) > 1e-10) throw Error(Errc::normalization, "kernel is not normalized");
  const int p = d.value() - 2;
  auto f = [&](double th) {
    const double c = std::cos(th);
    return kernel(c) * c * c * (p == 0 ? 1.0 : std::pow(std::sin(th), p));
  };
  return 2.0 * azimuthal_measure(d) * detail::integrate_pieces(f, 0.0, std::numbers::pi, kernel.theta_breaks(), 1e-10);
}

// Orthonormal vectors spanning the complement of a unit vector (d = 3).
inline std::pair<Vec3, Vec3> complement_basis(const Vec3& a) {
  const int k = std::abs(a[0]) <= std::abs(a[1]) ? (std::abs(a[0]) <= std::abs(a[2]) ? 0 : 2)
                                                  : (std::abs(a[1]) <= std::abs(a[2]) ? 1 : 2);
  Vec3 e;
  e[k] = 1.0;
  Vec3 u = e - dot(e, a) * a;
  u = u / norm(u);
  Vec3 w = cross(a, u);
  w = w / norm(w);
  return {u, w};
}

// Direction with density k(v_hat . n_hat) from two uniforms on [0, 1):
// u_polar selects theta by inverse CDF, u_azimuth the azimuth around v_hat.
inline UnitVector direction_from_variates(const Kernel& kernel, const UnitVector& v_hat, double u_polar,
                                          double u_azimuth) {
  const Dim d = kernel.dim();
  if (d == 1) throw Error(Errc::unsupported_dimension, "d = 1 collisions are deterministic flips");
  const double theta = kernel.cdf_table().invert(u_polar);
  const double ct = std::cos(theta), st = std::sin(theta);
  const Vec3& a = v_hat.vec();
  if (d == 2) {
    const Vec3 perp{-a[1], a[0], 0.0};
    const double omega = u_azimuth < 0.5 ? -1.0 : 1.0;
    return UnitVector(ct * a + (omega * st) * perp, d);
  }
  const auto [e1, e2] = complement_basis(a);
  const double phi = 2.0 * std::numbers::pi * u_azimuth;
  return UnitVector(ct * a + st * (std::cos(phi) * e1 + std::sin(phi) * e2), d);
}

inline UnitVector sample_direction(const Kernel& kernel, const UnitVector& v_hat, RandomStream& rng) {
  if (kernel.dim() == 1) throw Error(Errc::unsupported_dimension, "d = 1 collisions are deterministic flips");
  const double u1 = rng.uniform();
  const double u2 = rng.uniform();
  return direction_from_variates(kernel, v_hat, u1, u2);
}

inline Vec3 reflect(const Vec3& v, const UnitVector& n_hat) { return v - (2.0 * dot(v, n_hat.vec())) * n_hat.vec(); }

// One-dimensional virtual collision. The flip v -> -v is applied with
// probability 1/2 per event so that the current relaxes at rate rho_k = 1.
inline double collide_1d(double v, double variate) { return variate < 0.5 ? -v : v; }

// Returns w_hat' with v_hat . v_hat' = w_hat . w_hat' and
// v_hat . w_hat = v_hat' . w_hat'.
inline UnitVector match_collision(const UnitVector& v_hat, const UnitVector& v_hat_prime, const UnitVector& w_hat) {
  const Dim d = v_hat.dim();
  const Vec3& a = v_hat.vec();
  const Vec3& ap = v_hat_prime.vec();
  const Vec3& b = w_hat.vec();
  if (d == 1) return UnitVector(dot(a, ap) * b, d);
  if (d == 2) {
    const double c = dot(a, ap);
    const double s = a[0] * ap[1] - a[1] * ap[0];
    return UnitVector(Vec3{c * b[0] - s * b[1], s * b[0] + c * b[1], 0.0}, d);
  }
  // The reflection swapping v_hat' and w_hat maps v_hat to a solution; its
  // component normal to span(v_hat', w_hat) is then given the sign of the
  // lexicographically larger unit normal.
  Vec3 y = a;
  const Vec3 diff = ap - b;
  const double dn2 = norm2(diff);
  if (dn2 > 0.0) y = a - (2.0 * dot(a, diff) / dn2) * diff;
  const Vec3 normal = cross(ap, b);
  const double nn = norm(normal);
  if (nn > 1e-3) {
    Vec3 z = normal / nn;
    for (int k = 0; k < 3; ++k) {
      if (std::abs(z[k]) > 1e-12) {
        if (z[k] < 0) z = -z;
        break;
      }
    }
    const double cz = dot(y, z);
    if (cz < 0) y = y - (2.0 * cz) * z;
  }
  return UnitVector(y, d);
}

// n_hat = (w - w') / |w - w'|, or nullopt for an identity collision.
inline std::optional<UnitVector> collision_normal(const Vec3& w, const Vec3& w_prime, Dim d) {
  const double nw = norm(w), nwp = norm(w_prime);
  if (std::abs(nw - nwp) > 1e-9 * std::max(1.0, nw)) {
    throw Error(Errc::invalid_argument, "collision_normal needs |w| = |w'|");
  }
  const Vec3 diff = w - w_prime;
  if (norm(diff) < 1e-12) return std::nullopt;
  return UnitVector(diff, d);
}

}  // namespace thermochaos
