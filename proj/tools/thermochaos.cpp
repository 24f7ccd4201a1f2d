// thermochaos: experiment driver.
//
//   thermochaos <subcommand> [--config file.toml] [--seed S] [--seeds K]
//               [--out DIR] [--threads T] [--format csv|jsonl]
//
// Exit codes: 0 ok, 1 config or usage error, 2 acceptance failure,
// 3 runtime failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "thermochaos/config.hpp"
#include "thermochaos/current.hpp"
#include "thermochaos/experiments/acceptance.hpp"
#include "thermochaos/experiments/pipelines.hpp"
#include "thermochaos/io.hpp"
#include "thermochaos/metrics.hpp"
#include "thermochaos/vbe1d.hpp"

namespace fs = std::filesystem;
using namespace thermochaos;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitAcceptance = 2;
constexpr int kExitRuntime = 3;

struct Flags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> seeds;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
  std::optional<std::string> format;
};

struct ConfigFailure {
  std::vector<std::string> messages;
};

RunConfig resolve(const Flags& f) {
  RunConfig c;
  if (!f.config_path.empty()) {
    std::ifstream is(f.config_path);
    if (!is) throw ConfigFailure{{"cannot read " + f.config_path}};
    std::stringstream ss;
    ss << is.rdbuf();
    auto res = validate_config(ss.str());
    if (!res.ok()) {
      ConfigFailure fail;
      for (const auto& issue : res.issues) fail.messages.push_back(f.config_path + ": " + issue.format());
      throw fail;
    }
    c = *res.config;
  }
  if (f.seed) c.master_seed = *f.seed;
  if (f.seeds) c.seeds = *f.seeds;
  if (f.out) c.out_dir = *f.out;
  if (f.threads) c.threads = *f.threads;
  if (f.format) c.format = *f.format;
  if (c.seeds < 1) throw ConfigFailure{{"--seeds: seeds must be >= 1"}};
  if (c.threads < 1) throw ConfigFailure{{"--threads: threads must be >= 1"}};
  // round-trip through the validator so overrides obey the same schema
  auto again = validate_config(serialize_config(c));
  if (!again.ok()) {
    ConfigFailure fail;
    for (const auto& issue : again.issues) fail.messages.push_back(issue.format());
    throw fail;
  }
  return c;
}

class Record {
 public:
  Record(const RunConfig& c, std::string subcommand)
      : c_(c), sub_(std::move(subcommand)), t0_(std::chrono::steady_clock::now()) {}

  json header() const {
    return {{"config_hash", hex64(config_hash(c_))}, {"version", kVersion}, {"seed", c_.master_seed}};
  }

  void output(const fs::path& p) { outputs_.push_back(p.string()); }

  void finish(const json& summary) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    json rec{{"format", "thermochaos"},
             {"kind", "run_record"},
             {"subcommand", sub_},
             {"version", kVersion},
             {"config_hash", hex64(config_hash(c_))},
             {"seed", c_.master_seed},
             {"threads", c_.threads},
             {"config", serialize_config(c_)},
             {"timing", {{"seconds", secs}}},
             {"outputs", outputs_},
             {"summary", summary}};
    const fs::path p = fs::path(c_.out_dir) / "run.json";
    auto os = open_output(p);
    os << rec.dump(2) << "\n";
    std::cout << sub_ << ": wrote " << outputs_.size() + 1 << " files to " << c_.out_dir << " (" << secs << " s)\n";
  }

 private:
  const RunConfig& c_;
  std::string sub_;
  std::chrono::steady_clock::time_point t0_;
  std::vector<std::string> outputs_;
};

json params_json(const RunConfig& c, const Setup& s) {
  return {{"E", c.E}, {"u_tilde", c.u_tilde}, {"rho_k", s.params.rho_k}, {"horizon", c.horizon},
          {"kernel", c.kernel.type}, {"initial", c.initial}};
}

json path_json(const RunConfig& c, const Setup& s, const PathSummary& p, const std::vector<std::string>& names,
               const json& head) {
  json gaps = json::object();
  for (std::size_t g = 0; g < p.gaps.size(); ++g) gaps[names[g]] = p.gaps[g];
  json j{{"seed", p.seed},
         {"seed_index", p.index},
         {"N", p.n},
         {"d", c.d},
         {"params", params_json(c, s)},
         {"sup_distance", p.sup_distance},
         {"terminal_distance", p.terminal_distance},
         {"max_iso_residual", p.max_iso_residual},
         {"b_energy_min", p.b_energy_min},
         {"energy_floor_event", p.energy_floor_event},
         {"collisions", p.collisions},
         {"gap_time", c.metrics.gap_time},
         {"gaps", gaps},
         {"marginal_w1", p.marginal_w1}};
  j["master_seed"] = head["seed"];
  j["config_hash"] = head["config_hash"];
  j["version"] = head["version"];
  return j;
}

// Per-path JSONL plus the distance time series.
void write_paths(const RunConfig& c, const Setup& s, const std::vector<std::vector<PathSummary>>& paths,
                 const std::vector<std::string>& names, Record& rec) {
  const fs::path dir(c.out_dir);
  JsonlWriter jl(dir / "paths.jsonl", "paths");
  SeriesWriter dist(dir / "distance", "distance", {"N", "seed_index", "t", "distance", "b_current_error"}, c.format);
  for (const auto& per_n : paths) {
    for (const auto& p : per_n) {
      jl.write(path_json(c, s, p, names, rec.header()));
      const auto& r = p.record;
      for (std::size_t k = 0; k < r.sample_times.size(); ++k) {
        dist.row({static_cast<double>(p.n), static_cast<double>(p.index), r.sample_times[k], r.distance[k],
                  r.b_current_error[k]});
      }
    }
  }
  rec.output(dir / "paths.jsonl");
  rec.output(dist.path());
}

int cmd_solve_current(const RunConfig& c) {
  Record rec(c, "solve-current");
  const Setup s = make_setup(c);
  const auto& sol = s.current;
  std::vector<std::string> cols{"t", "y"};
  for (int k = 0; k < c.d; ++k) cols.push_back("j" + std::to_string(k));
  cols.push_back("j_perp");
  SeriesWriter w(fs::path(c.out_dir) / "current", "current", cols, c.format);
  for (std::size_t k = 0; k < sol.times().size(); ++k) {
    std::vector<double> row{sol.times()[k], sol.y_at_node(k)};
    for (int i = 0; i < c.d; ++i) row.push_back(sol.values()[k][i]);
    row.push_back(norm(sol.perp_at_node(k)));
    w.row(row);
  }
  rec.output(w.path());
  json summary{{"y_plus", sol.zero_field() ? json(nullptr) : json(sol.y_plus())},
               {"y_minus", sol.zero_field() ? json(nullptr) : json(sol.y_minus())},
               {"terminal_gap", sol.terminal_gap()},
               {"rho_k", s.params.rho_k},
               {"residual", sol.times().size() >= 3 ? json(current_residual(sol, s.params)) : json(nullptr)}};
  auto os = open_output(fs::path(c.out_dir) / "summary.json");
  os << summary.dump(2) << "\n";
  rec.output(fs::path(c.out_dir) / "summary.json");
  rec.finish(summary);
  return 0;
}

int cmd_run_coupled(const RunConfig& c) {
  Record rec(c, "run-coupled");
  const Setup s = make_setup(c);
  const auto bank = test_bank(c.dim());
  std::vector<std::string> names;
  for (const auto& phi : bank) names.push_back(phi.name());
  std::vector<std::pair<std::size_t, std::uint32_t>> tasks;
  for (std::size_t k = 0; k < c.N.size(); ++k) {
    for (std::uint32_t i = 0; i < c.seeds; ++i) tasks.emplace_back(k, i);
  }
  auto results = parallel_map(tasks.size(), c.threads, [&](std::size_t t) {
    return run_path(c, s, c.N[tasks[t].first], tasks[t].second, bank);
  });
  std::vector<std::vector<PathSummary>> paths(c.N.size());
  for (std::size_t t = 0; t < tasks.size(); ++t) paths[tasks[t].first].push_back(std::move(results[t]));
  write_paths(c, s, paths, names, rec);
  json per_n = json::array();
  for (std::size_t k = 0; k < c.N.size(); ++k) {
    std::vector<double> sup, term;
    for (const auto& p : paths[k]) {
      sup.push_back(p.sup_distance);
      term.push_back(p.terminal_distance);
    }
    per_n.push_back({{"N", c.N[k]}, {"sup_distance", to_json(replicate_stat(sup))},
                     {"terminal_distance", to_json(replicate_stat(term))}});
  }
  rec.finish({{"paths", tasks.size()}, {"by_N", per_n}});
  return 0;
}

int cmd_sweep(const RunConfig& c) {
  if (c.N.size() < 2) throw ConfigFailure{{"N: sweep-N needs at least two values of N"}};
  Record rec(c, "sweep-N");
  const Setup s = make_setup(c);
  const SweepResult sw = sweep_n(c, c.threads);
  write_paths(c, s, sw.paths, sw.bank_names, rec);
  const json report = to_json(sw.report);
  auto os = open_output(fs::path(c.out_dir) / "report.json");
  os << report.dump(2) << "\n";
  rec.output(fs::path(c.out_dir) / "report.json");
  rec.finish({{"slope", report["slope"]}, {"gap_fits", report["gap_fits"]}});
  return 0;
}

int cmd_vbe(const RunConfig& c) {
  Record rec(c, "vbe1d");
  const VbeSolve v = solve_vbe_config(c);
  SeriesWriter w(fs::path(c.out_dir) / "vbe", "vbe1d", {"t", "j_tilde", "j_ode", "u_tilde", "a", "mass"}, c.format);
  for (std::size_t k = 0; k < v.run.times.size(); ++k) {
    const double t = v.run.times[k];
    w.row({t, v.run.j_tilde[k], v.ode.at(t)[0], v.run.u[k], v.run.a[k], v.run.mass[k]});
  }
  rec.output(w.path());
  const auto& g = v.run.final_state.grid;
  SeriesWriter dens(fs::path(c.out_dir) / "density", "vbe1d_density", {"v", "f"}, c.format);
  for (std::size_t i = 0; i < g.M; ++i) dens.row({g.center(i), g.f[i]});
  rec.output(dens.path());
  rec.finish({{"dv", v.run.dv},
              {"dt", v.run.dt},
              {"max_current_deviation", v.deviation},
              {"terminal_j", v.run.j_tilde.back()},
              {"y_plus", v.ode.zero_field() ? json(nullptr) : json(v.ode.y_plus())}});
  return 0;
}

// Rebuild a report from per-path JSONL or a distance CSV.
int cmd_metrics(const RunConfig& c, const std::string& input) {
  if (input.empty()) throw ConfigFailure{{"--input: metrics needs --input <paths.jsonl|distance.csv>"}};
  Record rec(c, "metrics");
  struct Acc {
    std::vector<double> sup, term, w1;
    std::map<std::string, std::vector<double>> gaps;
  };
  std::map<std::size_t, Acc> by_n;
  std::vector<std::string> names;
  const fs::path in(input);
  if (in.extension() == ".jsonl") {
    for (const auto& j : read_jsonl(in)) {
      if (!j.contains("N") || !j.contains("sup_distance")) continue;
      auto& a = by_n[j.at("N").get<std::size_t>()];
      a.sup.push_back(j.at("sup_distance").get<double>());
      a.term.push_back(j.at("terminal_distance").get<double>());
      if (j.contains("marginal_w1")) a.w1.push_back(j.at("marginal_w1").get<double>());
      if (j.contains("gaps")) {
        for (auto it = j.at("gaps").begin(); it != j.at("gaps").end(); ++it) {
          if (std::find(names.begin(), names.end(), it.key()) == names.end()) names.push_back(it.key());
          a.gaps[it.key()].push_back(it.value().get<double>());
        }
      }
    }
  } else {
    const CsvTable t = read_csv(in);
    const std::size_t cn = t.column("N"), cs = t.column("seed_index"), ct = t.column("t"), cd = t.column("distance");
    std::map<std::pair<std::size_t, std::size_t>, std::pair<double, double>> paths;  // sup, (t, last)
    std::map<std::pair<std::size_t, std::size_t>, double> last_t;
    for (const auto& r : t.rows) {
      const auto key = std::make_pair(static_cast<std::size_t>(r[cn]), static_cast<std::size_t>(r[cs]));
      auto& p = paths[key];
      p.first = std::max(p.first, r[cd]);
      if (!last_t.count(key) || r[ct] >= last_t[key]) {
        last_t[key] = r[ct];
        p.second = r[cd];
      }
    }
    for (const auto& [key, p] : paths) {
      by_n[key.first].sup.push_back(p.first);
      by_n[key.first].term.push_back(p.second);
    }
  }
  if (by_n.empty()) throw Error(Errc::insufficient_data, "no path records in " + input);
  PocReport rep;
  for (const auto& [n, a] : by_n) {
    PocRow row;
    row.n = n;
    row.seeds = a.sup.size();
    row.sup_distance = replicate_stat(a.sup);
    row.terminal_distance = replicate_stat(a.term);
    if (!a.w1.empty()) row.sliced_w1 = replicate_stat(a.w1);
    row.gap_names = names;
    for (const auto& name : names) {
      auto it = a.gaps.find(name);
      row.gaps.push_back(it == a.gaps.end() ? ReplicateStat{} : replicate_stat(it->second));
    }
    rep.rows.push_back(std::move(row));
  }
  fit_report(rep);
  const json report = to_json(rep);
  auto os = open_output(fs::path(c.out_dir) / "report.json");
  os << report.dump(2) << "\n";
  rec.output(fs::path(c.out_dir) / "report.json");
  rec.finish({{"input", input}, {"slope", report["slope"]}});
  return 0;
}

int cmd_accept(const RunConfig& c, const std::vector<int>& only) {
  Record rec(c, "accept");
  acceptance::Options o;
  o.threads = c.threads;
  const fs::path p = fs::path(c.out_dir) / "acceptance.jsonl";
  JsonlWriter jl(p, "acceptance");
  const auto results = acceptance::run_all(
      o,
      [&](const acceptance::CriterionResult& r) {
        std::cout << acceptance::format_line(r) << std::endl;
        jl.write({{"id", r.id}, {"title", r.title}, {"passed", r.passed}, {"detail", r.detail},
                  {"seconds", r.seconds}, {"budget_seconds", r.budget_seconds}});
      },
      only);
  rec.output(p);
  const auto passed = std::count_if(results.begin(), results.end(), [](const auto& r) { return r.passed; });
  std::cout << passed << "/" << results.size() << " criteria passed\n";
  rec.finish({{"passed", passed}, {"total", results.size()}});
  return passed == static_cast<long>(results.size()) ? 0 : kExitAcceptance;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"thermochaos: thermostatted kinetic particle experiments"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Flags f;
  auto add_common = [&f](CLI::App* sub) {
    sub->add_option("--config", f.config_path, "TOML configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "master seed");
    sub->add_option("--seeds", f.seeds, "paths per N");
    sub->add_option("--out", f.out, "output directory");
    sub->add_option("--threads", f.threads, "worker threads");
    sub->add_option("--format", f.format, "time-series format")->check(CLI::IsMember({"csv", "jsonl"}));
  };
  auto* solve = app.add_subcommand("solve-current", "integrate the mean-field current ODE");
  auto* coupled = app.add_subcommand("run-coupled", "coupled A/B paths for each N and seed");
  auto* sweep = app.add_subcommand("sweep-N", "N-sweep with scaling fits");
  auto* vbe = app.add_subcommand("vbe1d", "one-dimensional kinetic solve");
  auto* metrics = app.add_subcommand("metrics", "rebuild a scaling report from stored paths");
  auto* accept = app.add_subcommand("accept", "run the acceptance suite");
  auto* show = app.add_subcommand("config", "print the resolved configuration");
  for (auto* sub : {solve, coupled, sweep, vbe, metrics, accept, show}) add_common(sub);
  std::string input;
  metrics->add_option("--input", input, "paths.jsonl or distance.csv");
  std::vector<int> only;
  accept->add_option("--only", only, "criterion ids")->check(CLI::Range(1, 11));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    const RunConfig c = resolve(f);
    if (*show) {
      std::cout << serialize_config(c);
      return 0;
    }
    if (*solve) return cmd_solve_current(c);
    if (*coupled) return cmd_run_coupled(c);
    if (*sweep) return cmd_sweep(c);
    if (*vbe) return cmd_vbe(c);
    if (*metrics) return cmd_metrics(c, input);
    if (*accept) return cmd_accept(c, only);
  } catch (const ConfigFailure& e) {
    for (const auto& m : e.messages) std::cerr << "config error: " << m << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return e.code() == Errc::config ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
