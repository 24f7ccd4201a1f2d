#pragma once

// Run configuration: TOML parsing with per-field validation, explicit
// defaults, serialization and a stable content hash.

#include <cstdint>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <toml.hpp>

#include "thermochaos/core.hpp"
#include "thermochaos/kernel.hpp"
#include "thermochaos/processes.hpp"
#include "thermochaos/vbe1d.hpp"

namespace thermochaos {

struct KernelSpec {
  std::string type = "uniform";
  std::vector<double> nodes;
  std::vector<double> values;
  bool operator==(const KernelSpec&) const = default;
};

struct VbeSettings {
  std::size_t M = 2048;
  double v_max = 0.0;  // 0 selects 6 sqrt(u~)
  double cfl = kVbeDefaultCfl;
  bool operator==(const VbeSettings&) const = default;
};

struct MetricsSettings {
  double gap_time = 1.0;
  std::size_t n_directions = 64;
  std::size_t bootstrap = 400;
  bool operator==(const MetricsSettings&) const = default;
};

struct RunConfig {
  int d = 2;
  std::vector<std::size_t> N{1000};
  KernelSpec kernel;
  std::vector<double> E{0.5, 0.0};
  double u_tilde = 1.0;
  std::string initial = "gaussian";
  double horizon = 2.0;
  double sample_dt = 0.01;
  double dt = 0.0;  // 0 selects the default flow step
  std::vector<double> j0{0.0, 0.0};
  std::size_t seeds = 20;
  std::uint64_t master_seed = 1;
  std::size_t threads = 1;
  std::string out_dir = "out";
  std::string format = "csv";
  VbeSettings vbe;
  MetricsSettings metrics;

  bool operator==(const RunConfig&) const = default;

  Dim dim() const { return Dim(d); }
  Vec3 field() const {
    Vec3 e;
    for (int k = 0; k < d; ++k) e[k] = E[static_cast<std::size_t>(k)];
    return e;
  }
  Vec3 initial_current() const {
    Vec3 j;
    for (int k = 0; k < d; ++k) j[k] = j0[static_cast<std::size_t>(k)];
    return j;
  }
  InitialFamily family() const { return initial == "shell" ? InitialFamily::shell : InitialFamily::gaussian; }
  double vbe_v_max() const { return vbe.v_max > 0.0 ? vbe.v_max : 6.0 * std::sqrt(u_tilde); }
};

inline Kernel make_kernel(const KernelSpec& spec, Dim d) {
  if (spec.type == "uniform") return Kernel::uniform(d);
  if (spec.type == "table") return Kernel::table(d, spec.nodes, spec.values);
  throw Error(Errc::config, "unknown kernel type '" + spec.type + "'");
}

struct ConfigIssue {
  std::string path;
  std::string message;
  std::size_t line = 0;

  std::string format() const {
    std::string s = path.empty() ? std::string("config") : path;
    if (line > 0) s += " (line " + std::to_string(line) + ")";
    return s + ": " + message;
  }
};

struct ConfigResult {
  std::optional<RunConfig> config;
  std::vector<ConfigIssue> issues;
  bool ok() const { return config.has_value(); }
};

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(std::vector<ConfigIssue>& issues) : issues_(issues) {}

  void fail(const std::string& path, const std::string& msg, const toml::node* node = nullptr) {
    issues_.push_back({path, msg, node ? static_cast<std::size_t>(node->source().begin.line) : 0});
  }

  void check_keys(const toml::table& t, const std::string& prefix, const std::set<std::string>& allowed) {
    for (auto&& [k, v] : t) {
      const std::string key(k.str());
      if (!allowed.count(key)) fail(prefix + key, "unknown key", &v);
    }
  }

  std::optional<double> number(const toml::node& n, const std::string& path) {
    if (auto x = n.value<double>()) return *x;
    fail(path, "expected a number", &n);
    return std::nullopt;
  }

  void real(const toml::table& t, const char* key, const std::string& path, double& out) {
    if (const toml::node* n = t.get(key)) {
      if (auto x = number(*n, path)) out = *x;
    }
  }

  template <class U>
  void integer(const toml::table& t, const char* key, const std::string& path, U& out) {
    if (const toml::node* n = t.get(key)) {
      auto x = n->value<std::int64_t>();
      if (!n->is_integer() || !x) {
        fail(path, "expected an integer", n);
      } else if (*x < 0) {
        fail(path, "must be nonnegative", n);
        out = 0;
      } else {
        out = static_cast<U>(*x);
      }
    }
  }

  void string(const toml::table& t, const char* key, const std::string& path, std::string& out) {
    if (const toml::node* n = t.get(key)) {
      if (auto x = n->value<std::string>()) {
        out = *x;
      } else {
        fail(path, "expected a string", n);
      }
    }
  }

  std::optional<std::vector<double>> reals(const toml::node& n, const std::string& path) {
    const toml::array* arr = n.as_array();
    if (!arr) {
      fail(path, "expected an array of numbers", &n);
      return std::nullopt;
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < arr->size(); ++i) {
      auto x = number(*arr->get(i), path + "[" + std::to_string(i) + "]");
      if (!x) return std::nullopt;
      out.push_back(*x);
    }
    return out;
  }

 private:
  std::vector<ConfigIssue>& issues_;
};

}  // namespace detail

inline ConfigResult validate_config(std::string_view text) {
  ConfigResult res;
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    res.issues.push_back({"", std::string(e.description()), static_cast<std::size_t>(e.source().begin.line)});
    return res;
  }
  detail::ConfigReader rd(res.issues);
  RunConfig c;
  rd.check_keys(root, "", {"d", "N", "kernel", "E", "u_tilde", "initial", "horizon", "sample_dt", "dt", "j0",
                           "seeds", "output", "vbe", "metrics", "threads"});

  if (const toml::node* n = root.get("d")) {
    auto x = n->value<std::int64_t>();
    if (!n->is_integer() || !x) {
      rd.fail("d", "expected an integer", n);
    } else if (*x < 1 || *x > 3) {
      rd.fail("d", "d must be 1, 2 or 3", n);
    } else {
      c.d = static_cast<int>(*x);
    }
  }
  const auto d = static_cast<std::size_t>(c.d);
  // vectors default to the right length for d
  c.E.assign(d, 0.0);
  c.E[0] = 0.5;
  c.j0.assign(d, 0.0);

  if (const toml::node* n = root.get("N")) {
    std::vector<const toml::node*> items;
    if (const toml::array* arr = n->as_array()) {
      for (std::size_t i = 0; i < arr->size(); ++i) items.push_back(arr->get(i));
      if (items.empty()) rd.fail("N", "N list must not be empty", n);
    } else {
      items.push_back(n);
    }
    c.N.clear();
    for (std::size_t i = 0; i < items.size(); ++i) {
      const std::string path = n->is_array() ? "N[" + std::to_string(i) + "]" : "N";
      auto x = items[i]->value<std::int64_t>();
      if (!items[i]->is_integer() || !x) {
        rd.fail(path, "expected an integer", items[i]);
      } else if (*x < 1) {
        rd.fail(path, "N must be >= 1", items[i]);
      } else if (*x > 50'000'000) {
        rd.fail(path, "N exceeds the memory guard (5e7 particles)", items[i]);
      } else {
        c.N.push_back(static_cast<std::size_t>(*x));
      }
    }
  }

  if (const toml::node* n = root.get("kernel")) {
    if (auto s = n->value<std::string>()) {
      if (*s != "uniform") rd.fail("kernel", "string kernel must be \"uniform\"", n);
      c.kernel.type = "uniform";
    } else if (const toml::table* t = n->as_table()) {
      rd.check_keys(*t, "kernel.", {"type", "nodes", "values"});
      rd.string(*t, "type", "kernel.type", c.kernel.type);
      if (c.kernel.type != "uniform" && c.kernel.type != "table") {
        rd.fail("kernel.type", "must be \"uniform\" or \"table\"", t->get("type"));
      }
      if (c.kernel.type == "table") {
        const toml::node* nn = t->get("nodes");
        const toml::node* nv = t->get("values");
        if (!nn || !nv) {
          rd.fail("kernel", "table kernel needs nodes and values", n);
        } else {
          auto nodes = rd.reals(*nn, "kernel.nodes");
          auto values = rd.reals(*nv, "kernel.values");
          if (nodes && values) {
            c.kernel.nodes = *nodes;
            c.kernel.values = *values;
            try {
              (void)make_kernel(c.kernel, Dim(c.d));
            } catch (const Error& e) {
              rd.fail("kernel.values", e.what(), nv);
            }
          }
        }
      }
    } else {
      rd.fail("kernel", "expected \"uniform\" or a table", n);
    }
  }

  if (const toml::node* n = root.get("E")) {
    if (auto e = rd.reals(*n, "E")) {
      if (e->size() != d) {
        rd.fail("E", "E must have exactly d = " + std::to_string(d) + " components", n);
      } else {
        c.E = *e;
      }
    }
  }
  if (const toml::node* n = root.get("j0")) {
    if (auto j = rd.reals(*n, "j0")) {
      if (j->size() != d) {
        rd.fail("j0", "j0 must have exactly d = " + std::to_string(d) + " components", n);
      } else {
        c.j0 = *j;
      }
    }
  }

  rd.real(root, "u_tilde", "u_tilde", c.u_tilde);
  if (!(c.u_tilde > 0.0)) rd.fail("u_tilde", "u_tilde must be > 0", root.get("u_tilde"));
  {
    double jn = 0.0;
    for (double x : c.j0) jn += x * x;
    if (c.u_tilde > 0.0 && std::sqrt(jn) > std::sqrt(c.u_tilde) * (1.0 + 1e-12)) {
      rd.fail("j0", "|j0| must not exceed sqrt(u_tilde)", root.get("j0"));
    }
  }
  rd.real(root, "horizon", "horizon", c.horizon);
  if (!(c.horizon > 0.0)) rd.fail("horizon", "horizon must be > 0", root.get("horizon"));
  rd.real(root, "sample_dt", "sample_dt", c.sample_dt);
  if (!(c.sample_dt >= 0.0)) rd.fail("sample_dt", "sample_dt must be >= 0", root.get("sample_dt"));
  rd.real(root, "dt", "dt", c.dt);
  if (!(c.dt >= 0.0)) rd.fail("dt", "dt must be >= 0 (0 selects the default)", root.get("dt"));
  rd.integer(root, "threads", "threads", c.threads);
  if (c.threads < 1) rd.fail("threads", "threads must be >= 1", root.get("threads"));

  if (const toml::node* n = root.get("initial")) {
    if (auto s = n->value<std::string>()) {
      c.initial = *s;
    } else if (const toml::table* t = n->as_table()) {
      rd.check_keys(*t, "initial.", {"family"});
      rd.string(*t, "family", "initial.family", c.initial);
    } else {
      rd.fail("initial", "expected a family name or table", n);
    }
    if (c.initial != "gaussian" && c.initial != "shell") {
      rd.fail("initial.family", "must be \"gaussian\" or \"shell\"", n);
    }
  }

  if (const toml::node* n = root.get("seeds")) {
    if (const toml::table* t = n->as_table()) {
      rd.check_keys(*t, "seeds.", {"count", "master"});
      rd.integer(*t, "count", "seeds.count", c.seeds);
      rd.integer(*t, "master", "seeds.master", c.master_seed);
    } else {
      rd.integer(root, "seeds", "seeds", c.seeds);
    }
    if (c.seeds < 1) rd.fail("seeds.count", "seed count must be >= 1", n);
  }

  if (const toml::node* n = root.get("output")) {
    if (const toml::table* t = n->as_table()) {
      rd.check_keys(*t, "output.", {"dir", "format"});
      rd.string(*t, "dir", "output.dir", c.out_dir);
      rd.string(*t, "format", "output.format", c.format);
      if (c.format != "csv" && c.format != "jsonl") rd.fail("output.format", "must be \"csv\" or \"jsonl\"", t->get("format"));
    } else {
      rd.fail("output", "expected a table", n);
    }
  }

  if (const toml::node* n = root.get("vbe")) {
    if (const toml::table* t = n->as_table()) {
      rd.check_keys(*t, "vbe.", {"M", "v_max", "cfl"});
      rd.integer(*t, "M", "vbe.M", c.vbe.M);
      if (c.vbe.M < 2 || c.vbe.M % 2 != 0) rd.fail("vbe.M", "M must be even and >= 2", t->get("M"));
      rd.real(*t, "v_max", "vbe.v_max", c.vbe.v_max);
      if (!(c.vbe.v_max >= 0.0)) rd.fail("vbe.v_max", "v_max must be >= 0 (0 selects 6 sqrt(u_tilde))", t->get("v_max"));
      rd.real(*t, "cfl", "vbe.cfl", c.vbe.cfl);
      if (!(c.vbe.cfl > 0.0 && c.vbe.cfl <= kVbeMaxCfl)) rd.fail("vbe.cfl", "cfl must be in (0, 0.9]", t->get("cfl"));
    } else {
      rd.fail("vbe", "expected a table", n);
    }
  }

  if (const toml::node* n = root.get("metrics")) {
    if (const toml::table* t = n->as_table()) {
      rd.check_keys(*t, "metrics.", {"gap_time", "n_directions", "bootstrap"});
      rd.real(*t, "gap_time", "metrics.gap_time", c.metrics.gap_time);
      rd.integer(*t, "n_directions", "metrics.n_directions", c.metrics.n_directions);
      rd.integer(*t, "bootstrap", "metrics.bootstrap", c.metrics.bootstrap);
      if (c.metrics.n_directions < 1) rd.fail("metrics.n_directions", "must be >= 1", t->get("n_directions"));
      if (c.metrics.bootstrap < 2) rd.fail("metrics.bootstrap", "must be >= 2", t->get("bootstrap"));
      if (!(c.metrics.gap_time >= 0.0 && c.metrics.gap_time <= c.horizon)) {
        rd.fail("metrics.gap_time", "must lie in [0, horizon]", t->get("gap_time"));
      }
    } else {
      rd.fail("metrics", "expected a table", n);
    }
  }

  if (res.issues.empty()) res.config = c;
  return res;
}

inline RunConfig parse_config(std::string_view text) {
  auto res = validate_config(text);
  if (!res.ok()) {
    std::string msg;
    for (const auto& i : res.issues) msg += i.format() + "\n";
    throw Error(Errc::config, msg);
  }
  return *res.config;
}

// Fully resolved TOML, every default written out.
inline std::string serialize_config(const RunConfig& c) {
  auto arr = [](const auto& xs) {
    toml::array a;
    for (auto x : xs) a.push_back(x);
    return a;
  };
  toml::table kernel{{"type", c.kernel.type}};
  if (c.kernel.type == "table") {
    kernel.insert("nodes", arr(c.kernel.nodes));
    kernel.insert("values", arr(c.kernel.values));
  }
  toml::array ns;
  for (auto n : c.N) ns.push_back(static_cast<std::int64_t>(n));
  toml::table t{
      {"d", c.d},
      {"N", ns},
      {"kernel", kernel},
      {"E", arr(c.E)},
      {"u_tilde", c.u_tilde},
      {"initial", toml::table{{"family", c.initial}}},
      {"horizon", c.horizon},
      {"sample_dt", c.sample_dt},
      {"dt", c.dt},
      {"j0", arr(c.j0)},
      {"threads", static_cast<std::int64_t>(c.threads)},
      {"seeds", toml::table{{"count", static_cast<std::int64_t>(c.seeds)},
                            {"master", static_cast<std::int64_t>(c.master_seed)}}},
      {"output", toml::table{{"dir", c.out_dir}, {"format", c.format}}},
      {"vbe", toml::table{{"M", static_cast<std::int64_t>(c.vbe.M)}, {"v_max", c.vbe.v_max}, {"cfl", c.vbe.cfl}}},
      {"metrics", toml::table{{"gap_time", c.metrics.gap_time},
                              {"n_directions", static_cast<std::int64_t>(c.metrics.n_directions)},
                              {"bootstrap", static_cast<std::int64_t>(c.metrics.bootstrap)}}},
  };
  std::ostringstream os;
  os << t << "\n";
  return os.str();
}

// FNV-1a over the resolved configuration.
inline std::uint64_t config_hash(const RunConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize_config(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

}  // namespace thermochaos
