#pragma once

// Empirical measures, Lipschitz test functions, factorization gaps,
// Wasserstein distances and audits of the quantitative bounds.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "thermochaos/core.hpp"
#include "thermochaos/flows.hpp"
#include "thermochaos/processes.hpp"
#include "thermochaos/random.hpp"
#include "thermochaos/vbe1d.hpp"

namespace thermochaos {

struct EmpiricalMeasure {
  Dim d{1};
  std::vector<PhasePoint> atoms;

  std::size_t size() const { return atoms.size(); }
  double weight() const { return atoms.empty() ? 0.0 : 1.0 / static_cast<double>(atoms.size()); }

  static EmpiricalMeasure of(const Ensemble& e) {
    EmpiricalMeasure m{e.d, std::vector<PhasePoint>(e.size())};
    for (std::size_t i = 0; i < e.size(); ++i) m.atoms[i] = {e.q[i], e.v[i]};
    return m;
  }
  static EmpiricalMeasure of_velocities(Dim d, std::span<const Vec3> v) {
    EmpiricalMeasure m{d, std::vector<PhasePoint>(v.size())};
    for (std::size_t i = 0; i < v.size(); ++i) m.atoms[i] = {Vec3{}, v[i]};
    return m;
  }
};

// A bounded function of two phase points with a Lipschitz constant checked
// on random pairs (Euclidean distance on (q1, v1, q2, v2)).
class TestFunction {
 public:
  using Fn = std::function<double(const PhasePoint&, const PhasePoint&)>;

  TestFunction(std::string name, Fn fn, double lipschitz, double sup, Dim d, std::uint64_t seed = 0,
               std::size_t checks = 10000)
      : name_(std::move(name)), fn_(std::move(fn)), lipschitz_(lipschitz), sup_(sup) {
    if (!(lipschitz >= 0.0)) throw Error(Errc::invalid_argument, "Lipschitz bound must be nonnegative");
    RandomStream rng(seed, Purpose::spot_check);
    auto draw = [&](double scale) {
      PhasePoint p;
      for (int k = 0; k < d; ++k) {
        p.q[k] = rng.uniform();
        p.v[k] = scale * rng.normal();
      }
      return p;
    };
    for (std::size_t n = 0; n < checks; ++n) {
      const double scale = n % 2 == 0 ? 2.0 : 0.05;  // wide and nearby pairs
      const PhasePoint x1 = draw(2.0), x2 = draw(2.0);
      PhasePoint y1 = x1, y2 = x2;
      for (int k = 0; k < d; ++k) {
        y1.v[k] += scale * rng.normal();
        y2.v[k] += scale * rng.normal();
        y1.q[k] += 0.1 * scale * rng.normal();
        y2.q[k] += 0.1 * scale * rng.normal();
      }
      const double dist =
          std::sqrt(norm2(x1.q - y1.q) + norm2(x1.v - y1.v) + norm2(x2.q - y2.q) + norm2(x2.v - y2.v));
      const double fx = fn_(x1, x2), fy = fn_(y1, y2);
      if (std::abs(fx - fy) > lipschitz_ * dist * (1.0 + 1e-9) + 1e-15) {
        throw Error(Errc::invalid_argument, "test function '" + name_ + "' violates its Lipschitz bound");
      }
      if (std::abs(fx) > sup_ * (1.0 + 1e-12)) {
        throw Error(Errc::invalid_argument, "test function '" + name_ + "' exceeds its sup bound");
      }
    }
  }

  const std::string& name() const { return name_; }
  double lipschitz_bound() const { return lipschitz_; }
  double sup_bound() const { return sup_; }
  double operator()(const PhasePoint& a, const PhasePoint& b) const { return fn_(a, b); }

 private:
  std::string name_;
  Fn fn_;
  double lipschitz_;
  double sup_;
};

inline double clamp_speed(const Vec3& v) { return std::min(1.0, norm(v)); }
inline double tent(double x) { return std::max(0.0, 1.0 - std::abs(x)); }

// Bounded 1-Lipschitz functions of two particles.
inline std::vector<TestFunction> test_bank(Dim d, bool with_positions = false) {
  const double r2 = std::numbers::sqrt2;
  std::vector<TestFunction> bank;
  bank.emplace_back(
      "clamp_product",
      [r2](const PhasePoint& a, const PhasePoint& b) { return clamp_speed(a.v) * clamp_speed(b.v) / r2; }, 1.0,
      1.0 / r2, d, 11);
  bank.emplace_back(
      "tent_product",
      [r2](const PhasePoint& a, const PhasePoint& b) { return tent(a.v[0]) * tent(b.v[0]) / r2; }, 1.0, 1.0 / r2,
      d, 12);
  bank.emplace_back(
      "cos_difference",
      [r2](const PhasePoint& a, const PhasePoint& b) { return std::cos(a.v[0] - b.v[0]) / r2; }, 1.0, 1.0 / r2, d,
      13);
  if (with_positions) {
    const double s = 1.0 / std::sqrt(4.0 * std::numbers::pi * std::numbers::pi + 1.0);
    bank.emplace_back(
        "wave_clamp",
        [s](const PhasePoint& a, const PhasePoint& b) {
          return s * std::cos(2.0 * std::numbers::pi * a.q[0]) * clamp_speed(b.v);
        },
        1.0, s, d, 14);
  }
  return bank;
}

using ParticlePair = std::pair<PhasePoint, PhasePoint>;

struct GapEstimate {
  double gap = 0.0;     // |E phi(pair) - E phi(X, Y)|
  double signed_gap = 0.0;
  double stderr_ = 0.0;  // bootstrap standard error of the signed gap
  double ci_low = 0.0;   // 95% percentile interval of the signed gap
  double ci_high = 0.0;
  std::size_t pairs = 0;
};

inline constexpr std::size_t kMinReplicates = 20;

// Pairs (particles 1 and 2 of independent runs) against independent draws
// from f x f, formed from consecutive f samples.
inline GapEstimate factorization_gap(std::span<const ParticlePair> pairs, std::span<const PhasePoint> f_samples,
                                     const TestFunction& phi, std::uint64_t seed = 0, std::size_t n_boot = 400) {
  if (pairs.size() < kMinReplicates) {
    throw Error(Errc::insufficient_replication, "factorization gap needs at least 20 independent pairs");
  }
  const std::size_t n_prod = f_samples.size() / 2;
  if (n_prod < 1) throw Error(Errc::insufficient_data, "need at least two f samples");
  std::vector<double> a(pairs.size()), b(n_prod);
  for (std::size_t i = 0; i < pairs.size(); ++i) a[i] = phi(pairs[i].first, pairs[i].second);
  for (std::size_t i = 0; i < n_prod; ++i) b[i] = phi(f_samples[2 * i], f_samples[2 * i + 1]);

  GapEstimate g;
  g.pairs = pairs.size();
  g.signed_gap = mean(a) - mean(b);
  g.gap = std::abs(g.signed_gap);

  RandomStream rng(seed, Purpose::bootstrap);
  std::vector<double> boots(n_boot);
  for (std::size_t r = 0; r < n_boot; ++r) {
    const double ma = pairwise_sum<double>(a.size(), [&](std::size_t) { return a[rng.below(a.size())]; }) /
                      static_cast<double>(a.size());
    const double mb = pairwise_sum<double>(b.size(), [&](std::size_t) { return b[rng.below(b.size())]; }) /
                      static_cast<double>(b.size());
    boots[r] = ma - mb;
  }
  const double mbar = mean(boots);
  g.stderr_ = std::sqrt(pairwise_sum<double>(n_boot, [&](std::size_t r) { return (boots[r] - mbar) * (boots[r] - mbar); }) /
                        static_cast<double>(n_boot - 1));
  std::sort(boots.begin(), boots.end());
  g.ci_low = boots[static_cast<std::size_t>(0.025 * static_cast<double>(n_boot - 1))];
  g.ci_high = boots[static_cast<std::size_t>(0.975 * static_cast<double>(n_boot - 1))];
  return g;
}

struct ReplicateStat {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t replicates = 0;
};

inline ReplicateStat replicate_stat(std::span<const double> xs) {
  return {mean(xs), xs.size() > 1 ? standard_error(xs) : 0.0, xs.size()};
}

// Coupling bound on the gap. For one run, the mean over disjoint particle
// pairs (2k, 2k+1) of |phi(A pair) - phi(B pair)|. B pairs are exactly
// f x f distributed, so this bounds |E phi(A pair) - E phi(f x f)|.
inline double coupled_gap_run(const Ensemble& a, const Ensemble& b, const TestFunction& phi) {
  if (a.size() != b.size() || a.size() < 2) throw Error(Errc::insufficient_data, "need matched runs with N >= 2");
  const std::size_t m = a.size() / 2;
  return pairwise_sum<double>(m, [&](std::size_t k) {
           const PhasePoint a1{a.q[2 * k], a.v[2 * k]}, a2{a.q[2 * k + 1], a.v[2 * k + 1]};
           const PhasePoint b1{b.q[2 * k], b.v[2 * k]}, b2{b.q[2 * k + 1], b.v[2 * k + 1]};
           return std::abs(phi(a1, a2) - phi(b1, b2));
         }) /
         static_cast<double>(m);
}

inline ReplicateStat coupled_gap(std::span<const Snapshot> per_seed, const TestFunction& phi) {
  if (per_seed.size() < kMinReplicates) {
    throw Error(Errc::insufficient_replication, "coupled gap needs at least 20 seeds");
  }
  std::vector<double> xs(per_seed.size());
  for (std::size_t s = 0; s < per_seed.size(); ++s) xs[s] = coupled_gap_run(per_seed[s].a, per_seed[s].b, phi);
  return replicate_stat(xs);
}

// Exact W1 between two empirical measures on the line.
inline double w1_distance_1d(std::vector<double> x, std::vector<double> y) {
  if (x.empty() || y.empty()) throw Error(Errc::insufficient_data, "empty sample");
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double wx = 1.0 / static_cast<double>(x.size()), wy = 1.0 / static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double fx = 0.0, fy = 0.0, prev = std::min(x.front(), y.front()), total = 0.0;
  while (i < x.size() || j < y.size()) {
    const double next = j >= y.size() || (i < x.size() && x[i] <= y[j]) ? x[i] : y[j];
    total += std::abs(fx - fy) * (next - prev);
    prev = next;
    while (i < x.size() && x[i] == next) {
      fx += wx;
      ++i;
    }
    while (j < y.size() && y[j] == next) {
      fy += wy;
      ++j;
    }
  }
  return total;
}

// Exact W1 between samples and a piecewise-constant grid density.
inline double w1_distance_1d(std::vector<double> x, const VelocityGrid& g) {
  if (x.empty()) throw Error(Errc::insufficient_data, "empty sample");
  std::sort(x.begin(), x.end());
  const double mass = pairwise_sum<double>(g.M, [&](std::size_t m) { return g.f[m]; }) * g.dv;
  const double wx = 1.0 / static_cast<double>(x.size());
  // integral over [lo, hi] of |c - (F0 + s (v - lo))|
  auto seg = [](double c, double F0, double s, double lo, double hi) {
    const double d0 = F0 - c, d1 = F0 + s * (hi - lo) - c;
    if (d0 * d1 >= 0.0) return 0.5 * (std::abs(d0) + std::abs(d1)) * (hi - lo);
    const double root = lo + (-d0) / s;
    return 0.5 * std::abs(d0) * (root - lo) + 0.5 * std::abs(d1) * (hi - root);
  };
  double total = 0.0;
  std::size_t i = 0;
  double fx = 0.0;
  double prev = std::min(x.front(), -g.v_max);
  // samples left of the grid
  while (i < x.size() && x[i] < -g.v_max) {
    total += fx * (x[i] - prev);
    prev = x[i];
    fx += wx;
    ++i;
  }
  total += fx * (-g.v_max - prev);
  double F = 0.0;
  for (std::size_t m = 0; m < g.M; ++m) {
    const double lo = g.face(m), hi = lo + g.dv, s = g.f[m] / mass;
    double a = lo, Fa = F;
    while (i < x.size() && x[i] < hi) {
      const double xi = std::max(x[i], lo);
      total += seg(fx, Fa, s, a, xi);
      Fa += s * (xi - a);
      a = xi;
      fx += wx;
      ++i;
    }
    total += seg(fx, Fa, s, a, hi);
    F += s * g.dv;
  }
  prev = g.v_max;
  while (i < x.size()) {
    total += std::abs(fx - 1.0) * (x[i] - prev);
    prev = x[i];
    fx += wx;
    ++i;
  }
  return total;
}

// sqrt(2/pi) * integral sqrt(F (1 - F)): the large-N limit of
// sqrt(N) E W1(empirical, law) for the grid density.
inline double w1_sampling_constant(const VelocityGrid& g) {
  double F = 0.0, total = 0.0;
  for (std::size_t m = 0; m < g.M; ++m) {
    const double F1 = F + g.f[m] * g.dv;
    // Simpson on the cell with F linear inside
    auto h = [](double p) { return std::sqrt(std::max(0.0, p * (1.0 - p))); };
    total += g.dv * (h(F) + 4.0 * h(0.5 * (F + F1)) + h(F1)) / 6.0;
    F = F1;
  }
  return std::sqrt(2.0 / std::numbers::pi) * total;
}

// Mean of W1 over projections of the velocities. d = 2 uses n equispaced
// angles in [0, pi) with one random offset; d = 3 uses i.i.d. directions.
inline double sliced_w1(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, std::size_t n_directions,
                        std::uint64_t seed) {
  if (n_directions < 1) throw Error(Errc::invalid_argument, "n_directions must be >= 1");
  if (!(mu.d == nu.d)) throw Error(Errc::invalid_argument, "measures have different dimensions");
  if (mu.d < 2) throw Error(Errc::unsupported_dimension, "sliced W1 needs d >= 2");
  RandomStream rng(seed, Purpose::projection);
  std::vector<Vec3> dirs(n_directions);
  if (mu.d == 2) {
    const double offset = rng.uniform();
    for (std::size_t k = 0; k < n_directions; ++k) {
      const double th = (static_cast<double>(k) + offset) * std::numbers::pi / static_cast<double>(n_directions);
      dirs[k] = Vec3{std::cos(th), std::sin(th)};
    }
  } else {
    for (auto& dir : dirs) {
      Vec3 z{rng.normal(), rng.normal(), rng.normal()};
      dir = z / norm(z);
    }
  }
  std::vector<double> px(mu.size()), py(nu.size()), w(n_directions);
  for (std::size_t k = 0; k < n_directions; ++k) {
    for (std::size_t i = 0; i < mu.size(); ++i) px[i] = dot(mu.atoms[i].v, dirs[k]);
    for (std::size_t i = 0; i < nu.size(); ++i) py[i] = dot(nu.atoms[i].v, dirs[k]);
    w[k] = w1_distance_1d(px, py);
  }
  return mean(w);
}

struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

// Least squares of log y on log x.
inline LogLogFit fit_loglog(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(Errc::insufficient_data, "slope fit needs >= 2 points");
  const std::size_t n = x.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw Error(Errc::numeric, "log-log fit needs positive data");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  const double mx = mean(lx), my = mean(ly);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  LogLogFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

struct W1Observation {
  double n = 0.0;
  double dv = 0.0;
  double w1 = 0.0;
};

struct W1Fit {
  double c1 = 0.0;
  double c2 = 0.0;
  double max_rel_residual = 0.0;
};

// Nonnegative least squares for w1 ~ c1 / sqrt(N) + c2 dv.
inline W1Fit fit_w1_model(std::span<const W1Observation> obs) {
  if (obs.size() < 2) throw Error(Errc::insufficient_data, "W1 fit needs >= 2 observations");
  double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
  for (const auto& o : obs) {
    const double x1 = 1.0 / std::sqrt(o.n), x2 = o.dv;
    a11 += x1 * x1;
    a12 += x1 * x2;
    a22 += x2 * x2;
    b1 += x1 * o.w1;
    b2 += x2 * o.w1;
  }
  W1Fit f;
  const double det = a11 * a22 - a12 * a12;
  if (std::abs(det) > 1e-300) {
    f.c1 = (b1 * a22 - b2 * a12) / det;
    f.c2 = (a11 * b2 - a12 * b1) / det;
  }
  if (!(std::abs(det) > 1e-300) || f.c1 < 0.0 || f.c2 < 0.0) {
    // best of the two one-term models
    const double c1_only = std::max(0.0, b1 / a11), c2_only = a22 > 0 ? std::max(0.0, b2 / a22) : 0.0;
    double r1 = 0, r2 = 0;
    for (const auto& o : obs) {
      r1 += std::pow(o.w1 - c1_only / std::sqrt(o.n), 2);
      r2 += std::pow(o.w1 - c2_only * o.dv, 2);
    }
    f.c1 = r1 <= r2 ? c1_only : 0.0;
    f.c2 = r1 <= r2 ? 0.0 : c2_only;
  }
  for (const auto& o : obs) {
    const double model = f.c1 / std::sqrt(o.n) + f.c2 * o.dv;
    f.max_rel_residual = std::max(f.max_rel_residual, std::abs(o.w1 - model) / o.w1);
  }
  return f;
}

// Time increment over which the B-process energy floor cannot be crossed:
// (sqrt(u) / E) log((2 + 2 sqrt 2) / (1 + 2 sqrt 2)).
inline double delta_increment(double u_tilde, double e_norm) {
  if (!(e_norm > 0.0)) throw Error(Errc::zero_field, "the increment is undefined for E = 0");
  const double r2 = std::numbers::sqrt2;
  return std::sqrt(u_tilde) / e_norm * std::log((2.0 + 2.0 * r2) / (1.0 + 2.0 * r2));
}

// a(t) <= exp(6 E t / sqrt(u)) (a(0) + 3 u^2)
inline double fourth_moment_envelope(double t, double u_tilde, double e_norm, double a0) {
  return std::exp(6.0 * e_norm * t / std::sqrt(u_tilde)) * (a0 + 3.0 * u_tilde * u_tilde);
}

struct AuditParams {
  double u_tilde = 1.0;
  double e_norm = 0.0;
  std::optional<double> a0;  // law value of a(0); defaults to the empirical mean
};

struct FloorRow {
  std::size_t n = 0;
  std::size_t runs = 0;
  std::size_t events = 0;
  double frequency = 0.0;
  double scaled = 0.0;  // frequency * N, flat under the 1/N form
};

struct EnvelopeRow {
  double t = 0.0;
  double mean_a = 0.0;
  double stderr_a = 0.0;
  double envelope = 0.0;
  bool violated = false;
};

struct BoundAudit {
  std::optional<double> delta;
  double max_energy_change = 0.0;  // max |u(V~_t) - u(V~_0)| / u~ over records
  std::vector<FloorRow> floor;
  std::vector<EnvelopeRow> envelope;
  bool floor_monotone = true;
  bool envelope_ok = true;

  bool ok() const { return floor_monotone && envelope_ok; }
};

inline BoundAudit bound_audit(std::span<const CouplingRecord> records, const AuditParams& params) {
  BoundAudit out;
  if (records.empty()) return out;
  for (const auto& r : records) {
    if (!r.has_b) throw Error(Errc::invalid_argument, "audit needs B-process records");
    if (std::abs(r.u_tilde - params.u_tilde) > 1e-12 * params.u_tilde || !(r.d == records.front().d)) {
      throw Error(Errc::parameter_mismatch, "records have mixed parameters");
    }
  }
  if (params.e_norm > 0.0) out.delta = delta_increment(params.u_tilde, params.e_norm);

  for (const auto& r : records) {
    for (double u : r.b_energy) {
      out.max_energy_change = std::max(out.max_energy_change, std::abs(u - r.b_energy.front()) / params.u_tilde);
    }
  }

  std::vector<std::size_t> ns;
  for (const auto& r : records) ns.push_back(r.n);
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
  for (std::size_t n : ns) {
    FloorRow row{n, 0, 0, 0.0, 0.0};
    for (const auto& r : records) {
      if (r.n != n) continue;
      ++row.runs;
      if (r.energy_floor_event) ++row.events;
    }
    row.frequency = static_cast<double>(row.events) / static_cast<double>(row.runs);
    row.scaled = row.frequency * static_cast<double>(n);
    out.floor.push_back(row);
  }
  for (std::size_t k = 1; k < out.floor.size(); ++k) {
    if (out.floor[k].frequency > out.floor[k - 1].frequency) out.floor_monotone = false;
  }

  // Envelope on the common sample grid of the records.
  const auto& times = records.front().sample_times;
  std::vector<double> a_t(records.size());
  double a0 = 0.0;
  if (params.a0) {
    a0 = *params.a0;
  } else {
    for (std::size_t s = 0; s < records.size(); ++s) a_t[s] = records[s].b_fourth_moment.front();
    a0 = mean(a_t);
  }
  for (std::size_t k = 0; k < times.size(); ++k) {
    for (std::size_t s = 0; s < records.size(); ++s) {
      if (records[s].sample_times.size() != times.size()) {
        throw Error(Errc::parameter_mismatch, "records have different sample grids");
      }
      a_t[s] = records[s].b_fourth_moment[k];
    }
    EnvelopeRow row;
    row.t = times[k];
    row.mean_a = mean(a_t);
    row.stderr_a = a_t.size() > 1 ? standard_error(a_t) : 0.0;
    row.envelope = fourth_moment_envelope(row.t, params.u_tilde, params.e_norm, a0);
    row.violated = row.mean_a - 3.0 * row.stderr_a > row.envelope;
    if (row.violated) out.envelope_ok = false;
    out.envelope.push_back(row);
  }
  return out;
}

struct PocRow {
  std::size_t n = 0;
  std::size_t seeds = 0;
  ReplicateStat sup_distance;
  ReplicateStat terminal_distance;
  std::vector<std::string> gap_names;
  std::vector<ReplicateStat> gaps;
  std::optional<ReplicateStat> sliced_w1;
};

struct PocReport {
  std::vector<PocRow> rows;
  std::optional<LogLogFit> distance_fit;
  std::vector<std::optional<LogLogFit>> gap_fits;
};

inline void fit_report(PocReport& rep) {
  std::vector<double> ns, ds;
  for (const auto& r : rep.rows) {
    ns.push_back(static_cast<double>(r.n));
    ds.push_back(r.sup_distance.mean);
  }
  if (ns.size() >= 2 && std::all_of(ds.begin(), ds.end(), [](double x) { return x > 0.0; })) {
    rep.distance_fit = fit_loglog(ns, ds);
  }
  rep.gap_fits.clear();
  const std::size_t n_gaps = rep.rows.empty() ? 0 : rep.rows.front().gaps.size();
  for (std::size_t g = 0; g < n_gaps; ++g) {
    std::vector<double> ys;
    for (const auto& r : rep.rows) ys.push_back(r.gaps[g].mean);
    if (ns.size() >= 2 && std::all_of(ys.begin(), ys.end(), [](double x) { return x > 0.0; })) {
      rep.gap_fits.push_back(fit_loglog(ns, ys));
    } else {
      rep.gap_fits.push_back(std::nullopt);
    }
  }
}

}  // namespace thermochaos
