#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace thermochaos {

inline constexpr const char* kVersion = "0.4.1";

enum class Errc {
  unsupported_dimension,
  normalization,
  numeric,
  degenerate_ensemble,
  inadmissible_current,
  zero_field,
  out_of_range,
  insufficient_data,
  insufficient_replication,
  resource_guard,
  step_size,
  grid_too_small,
  parameter_mismatch,
  invalid_argument,
  config,
  io,
};

inline const char* to_string(Errc code) {
  switch (code) {
    case Errc::unsupported_dimension: return "unsupported-dimension";
    case Errc::normalization: return "normalization";
    case Errc::numeric: return "numeric";
    case Errc::degenerate_ensemble: return "degenerate-ensemble";
    case Errc::inadmissible_current: return "inadmissible-initial-current";
    case Errc::zero_field: return "zero-field";
    case Errc::out_of_range: return "out-of-range";
    case Errc::insufficient_data: return "insufficient-data";
    case Errc::insufficient_replication: return "insufficient-replication";
    case Errc::resource_guard: return "resource-guard";
    case Errc::step_size: return "step-size";
    case Errc::grid_too_small: return "grid-too-small";
    case Errc::parameter_mismatch: return "parameter-mismatch";
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::config: return "config";
    case Errc::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Spatial dimension of a simulation, restricted to 1, 2 or 3.
class Dim {
 public:
  explicit Dim(int d) : d_(d) {
    if (d < 1 || d > 3) throw Error(Errc::unsupported_dimension, "d must be 1, 2 or 3, got " + std::to_string(d));
  }
  int value() const noexcept { return d_; }
  operator int() const noexcept { return d_; }
  friend bool operator==(Dim a, Dim b) noexcept { return a.d_ == b.d_; }

 private:
  int d_;
};

// Three-component vector; components beyond the active dimension stay zero so
// the same arithmetic serves d = 1, 2 and 3.
struct Vec3 {
  std::array<double, 3> c{0.0, 0.0, 0.0};

  constexpr Vec3() = default;
  constexpr Vec3(double x, double y = 0.0, double z = 0.0) : c{x, y, z} {}

  double& operator[](std::size_t i) { return c[i]; }
  double operator[](std::size_t i) const { return c[i]; }

  friend Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
  friend Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
  friend Vec3 operator-(const Vec3& a) { return {-a[0], -a[1], -a[2]}; }
  friend Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
  friend Vec3 operator*(const Vec3& a, double s) { return s * a; }
  friend Vec3 operator/(const Vec3& a, double s) { return {a[0] / s, a[1] / s, a[2] / s}; }
  Vec3& operator+=(const Vec3& b) {
    for (int k = 0; k < 3; ++k) c[k] += b[k];
    return *this;
  }
  Vec3& operator-=(const Vec3& b) {
    for (int k = 0; k < 3; ++k) c[k] -= b[k];
    return *this;
  }
  Vec3& operator*=(double s) {
    for (auto& x : c) x *= s;
    return *this;
  }
  friend bool operator==(const Vec3& a, const Vec3& b) { return a.c == b.c; }
};

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm2(const Vec3& a) { return dot(a, a); }
inline double norm(const Vec3& a) { return std::sqrt(norm2(a)); }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

// Fixed-order pairwise summation. The recursion tree depends only on the
// length of the input, so the result is independent of how callers schedule
// work.
template <class T, class F>
T pairwise_sum(std::size_t n, F&& term) {
  constexpr std::size_t kLeaf = 32;
  struct Rec {
    F& f;
    T operator()(std::size_t lo, std::size_t hi) const {
      if (hi - lo <= kLeaf) {
        T s{};
        for (std::size_t i = lo; i < hi; ++i) s += f(i);
        return s;
      }
      const std::size_t mid = lo + (hi - lo) / 2;
      T a = (*this)(lo, mid);
      a += (*this)(mid, hi);
      return a;
    }
  };
  if (n == 0) return T{};
  return Rec{term}(0, n);
}

inline double pairwise_sum(std::span<const double> xs) {
  return pairwise_sum<double>(xs.size(), [&](std::size_t i) { return xs[i]; });
}

inline double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return pairwise_sum(xs) / static_cast<double>(xs.size());
}

// Sample standard deviation of the mean.
inline double standard_error(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n < 2) return 0.0;
  const double m = mean(xs);
  const double ss = pairwise_sum<double>(n, [&](std::size_t i) { return (xs[i] - m) * (xs[i] - m); });
  return std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
}

}  // namespace thermochaos
