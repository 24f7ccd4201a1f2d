#pragma once

// Self-describing output: CSV with a leading "# thermochaos <version> <kind>"
// line, JSONL whose first record names the format, version and kind.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "thermochaos/core.hpp"
#include "thermochaos/metrics.hpp"

namespace thermochaos {

using json = nlohmann::json;

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  return os;
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& kind, const std::vector<std::string>& columns)
      : os_(open_output(path)) {
    os_ << "# thermochaos " << kVersion << " " << kind << "\n";
    for (std::size_t i = 0; i < columns.size(); ++i) os_ << (i ? "," : "") << columns[i];
    os_ << "\n";
  }

  void row(const std::vector<double>& xs) {
    for (std::size_t i = 0; i < xs.size(); ++i) os_ << (i ? "," : "") << format_double(xs[i]);
    os_ << "\n";
  }

 private:
  std::ofstream os_;
};

class JsonlWriter {
 public:
  JsonlWriter(const std::filesystem::path& path, const std::string& kind) : os_(open_output(path)) {
    os_ << json{{"format", "thermochaos"}, {"version", kVersion}, {"kind", kind}}.dump() << "\n";
  }
  void write(const json& j) { os_ << j.dump() << "\n"; }

 private:
  std::ofstream os_;
};

// Time series in either format; JSONL rows are objects keyed by column.
class SeriesWriter {
 public:
  SeriesWriter(const std::filesystem::path& base, const std::string& kind, std::vector<std::string> columns,
               const std::string& format)
      : columns_(std::move(columns)) {
    if (format == "csv") {
      path_ = base;
      path_ += ".csv";
      csv_.emplace(path_, kind, columns_);
    } else if (format == "jsonl") {
      path_ = base;
      path_ += ".jsonl";
      jsonl_.emplace(path_, kind);
    } else {
      throw Error(Errc::invalid_argument, "unknown output format '" + format + "'");
    }
  }

  void row(const std::vector<double>& xs) {
    if (csv_) return csv_->row(xs);
    json j = json::object();
    for (std::size_t i = 0; i < xs.size() && i < columns_.size(); ++i) j[columns_[i]] = xs[i];
    jsonl_->write(j);
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::vector<std::string> columns_;
  std::filesystem::path path_;
  std::optional<CsvWriter> csv_;
  std::optional<JsonlWriter> jsonl_;
};

struct CsvTable {
  std::string header_line;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return i;
    }
    throw Error(Errc::io, "missing column '" + name + "'");
  }
};

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::io, "cannot open " + path.string());
  CsvTable t;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      t.header_line = line;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (t.columns.empty()) {
      t.columns = cells;
      continue;
    }
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        row.push_back(std::stod(c));
      } catch (const std::exception&) {
        throw Error(Errc::io, "non-numeric cell '" + c + "' in " + path.string());
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

// Records after the format line.
inline std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::io, "cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(Errc::io, "malformed JSONL in " + path.string() + ": " + e.what());
    }
    if (first && j.contains("format")) {
      first = false;
      continue;
    }
    first = false;
    out.push_back(std::move(j));
  }
  return out;
}

inline json to_json(const ReplicateStat& s) {
  return {{"mean", s.mean}, {"stderr", s.stderr_}, {"replicates", s.replicates}};
}

inline json to_json(const LogLogFit& f) { return {{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}}; }

inline json to_json(const PocReport& rep) {
  json rows = json::array();
  for (const auto& r : rep.rows) {
    json gaps = json::object();
    for (std::size_t g = 0; g < r.gaps.size(); ++g) gaps[r.gap_names[g]] = to_json(r.gaps[g]);
    json row{{"N", r.n},
             {"seeds", r.seeds},
             {"sup_distance", to_json(r.sup_distance)},
             {"terminal_distance", to_json(r.terminal_distance)},
             {"gaps", gaps}};
    if (r.sliced_w1) row["marginal_w1"] = to_json(*r.sliced_w1);
    rows.push_back(row);
  }
  json out{{"rows", rows}, {"slope", rep.distance_fit ? json(rep.distance_fit->slope) : json(nullptr)}};
  if (rep.distance_fit) out["distance_fit"] = to_json(*rep.distance_fit);
  json gap_fits = json::object();
  if (!rep.rows.empty()) {
    for (std::size_t g = 0; g < rep.gap_fits.size(); ++g) {
      gap_fits[rep.rows.front().gap_names[g]] = rep.gap_fits[g] ? to_json(*rep.gap_fits[g]) : json(nullptr);
    }
  }
  out["gap_fits"] = gap_fits;
  return out;
}

inline json to_json(const BoundAudit& a) {
  json floor = json::array();
  for (const auto& r : a.floor) {
    floor.push_back({{"N", r.n}, {"runs", r.runs}, {"events", r.events}, {"frequency", r.frequency},
                     {"frequency_times_N", r.scaled}});
  }
  json env = json::array();
  for (const auto& r : a.envelope) {
    env.push_back({{"t", r.t}, {"mean_a", r.mean_a}, {"stderr_a", r.stderr_a}, {"envelope", r.envelope},
                   {"violated", r.violated}});
  }
  return {{"delta", a.delta ? json(*a.delta) : json(nullptr)},
          {"max_energy_change", a.max_energy_change},
          {"floor", floor},
          {"floor_monotone", a.floor_monotone},
          {"envelope", env},
          {"envelope_ok", a.envelope_ok}};
}

}  // namespace thermochaos
