#pragma once

// CSV and markdown tables produced by the harness.
//
//   stats.csv  attack,model,epsilon,cpu_kwh,ram_kwh,total_kwh,accuracy,duration_s,emissions_g,spans
//   spans.csv  span_label,duration_s,cpu_kwh,ram_kwh,total_kwh,emissions_g
//   rcti.csv   attack,epsilon,delta_r,delta_c,rcti,elasticity
//   figures/{delta_r,delta_c,rcti}.csv  attack,epsilon,value,was_infinite
//
// Numbers are written in shortest round-trip form. Unbounded ratios are
// written as "inf", undefined (0/0) ones as "nochange".

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcti/energy.hpp"
#include "rcti/metrics.hpp"

namespace rcti {

class TableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One row of the per-model statistics table.
struct StatsRow {
  std::string attack;  // FG | PGD
  std::string model;   // baseline | robust
  double epsilon = 0.0;
  double cpu_kwh = 0.0;
  double ram_kwh = 0.0;
  double total_kwh = 0.0;
  double accuracy = 0.0;  // fraction
  double duration_s = 0.0;
  double emissions_g = 0.0;
  std::vector<std::string> spans;

  friend bool operator==(const StatsRow&, const StatsRow&) = default;
};

struct ScoredRecord {
  std::string attack;
  RctiRecord record;
  friend bool operator==(const ScoredRecord&, const ScoredRecord&) = default;
};

inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline double parse_number(const std::string& s, const std::string& what) {
  if (s == "inf") return kInfinity;
  if (s == "-inf") return -kInfinity;
  double v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || p != s.data() + s.size())
    throw TableError(what + ": '" + s + "' is not a number");
  return v;
}

inline std::string format_ratio(const Ratio& r) { return r.no_change ? "nochange" : format_double(r.value); }

inline Ratio parse_ratio(const std::string& s, const std::string& what) {
  if (s == "nochange") return Ratio::undefined();
  return Ratio{parse_number(s, what), false};
}

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(line);
  while (std::getline(ss, item, sep)) {
    if (!item.empty() && item.back() == '\r') item.pop_back();
    out.push_back(item);
  }
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

/// Header-indexed CSV reader; every listed column must be present.
class CsvTable {
 public:
  CsvTable(std::istream& in, const std::vector<std::string>& required, const std::string& origin)
      : origin_(origin) {
    std::string line;
    while (std::getline(in, line) && line.find_first_not_of(" \t\r") == std::string::npos) {
    }
    if (line.find_first_not_of(" \t\r") == std::string::npos) throw TableError(origin + ": empty CSV");
    const auto header = split(line, ',');
    for (std::size_t i = 0; i < header.size(); ++i) index_[header[i]] = i;
    for (const auto& col : required)
      if (!index_.count(col)) throw TableError(origin + ": missing column '" + col + "'");
    int lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      auto cells = split(line, ',');
      if (cells.size() != header.size())
        throw TableError(origin + ":" + std::to_string(lineno) + ": expected " +
                         std::to_string(header.size()) + " cells, got " + std::to_string(cells.size()));
      rows_.push_back(std::move(cells));
    }
  }

  std::size_t size() const { return rows_.size(); }
  const std::string& at(std::size_t row, const std::string& col) const { return rows_[row][index_.at(col)]; }
  bool has(const std::string& col) const { return index_.count(col) > 0; }
  std::string where(std::size_t row) const { return origin_ + " row " + std::to_string(row + 1); }

 private:
  std::string origin_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::vector<std::string>> rows_;
};

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw TableError("cannot write " + path.string());
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TableError("cannot open " + path.string());
  return in;
}

}  // namespace detail

inline const std::vector<std::string>& stats_columns() {
  static const std::vector<std::string> cols{"attack",     "model",    "epsilon",    "cpu_kwh",
                                             "ram_kwh",    "total_kwh", "accuracy",  "duration_s",
                                             "emissions_g", "spans"};
  return cols;
}

inline void write_stats_csv(std::ostream& out, const std::vector<StatsRow>& rows) {
  const auto& cols = stats_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : rows) {
    std::string spans;
    for (std::size_t i = 0; i < r.spans.size(); ++i) spans += (i ? ";" : "") + r.spans[i];
    out << r.attack << ',' << r.model << ',' << format_double(r.epsilon) << ',' << format_double(r.cpu_kwh)
        << ',' << format_double(r.ram_kwh) << ',' << format_double(r.total_kwh) << ','
        << format_double(r.accuracy) << ',' << format_double(r.duration_s) << ','
        << format_double(r.emissions_g) << ',' << spans << '\n';
  }
}

/// Reads stats rows. Only attack, model, epsilon, accuracy and total_kwh are
/// required; the other energy columns default to 0 when absent.
inline std::vector<StatsRow> read_stats_csv(std::istream& in, const std::string& origin = "stats.csv") {
  detail::CsvTable t(in, {"attack", "model", "epsilon", "accuracy", "total_kwh"}, origin);
  std::vector<StatsRow> rows;
  auto num = [&](std::size_t i, const std::string& col) {
    return t.has(col) ? parse_number(t.at(i, col), t.where(i) + " " + col) : 0.0;
  };
  for (std::size_t i = 0; i < t.size(); ++i) {
    StatsRow r;
    r.attack = t.at(i, "attack");
    r.model = t.at(i, "model");
    if (r.model != "baseline" && r.model != "robust")
      throw TableError(t.where(i) + ": model must be baseline or robust");
    r.epsilon = num(i, "epsilon");
    r.cpu_kwh = num(i, "cpu_kwh");
    r.ram_kwh = num(i, "ram_kwh");
    r.total_kwh = num(i, "total_kwh");
    r.accuracy = num(i, "accuracy");
    r.duration_s = num(i, "duration_s");
    r.emissions_g = num(i, "emissions_g");
    if (t.has("spans") && !t.at(i, "spans").empty()) r.spans = detail::split(t.at(i, "spans"), ';');
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_spans_csv(std::ostream& out, const std::vector<EnergyReport>& reports) {
  out << "span_label,duration_s,cpu_kwh,ram_kwh,total_kwh,emissions_g\n";
  for (const auto& r : reports)
    out << r.label << ',' << format_double(r.duration_s) << ',' << format_double(r.cpu_energy_kwh) << ','
        << format_double(r.ram_energy_kwh) << ',' << format_double(r.total_energy_kwh) << ','
        << format_double(r.emissions_g) << '\n';
}

inline std::string span_policy(bool include_training) {
  return include_training ? "train+attack+eval" : "attack+eval";
}

/// Pair every robust row with the baseline row of the same attack and
/// epsilon and score it. Output follows the order of the robust rows.
inline std::vector<ScoredRecord> score_stats(const std::vector<StatsRow>& rows, CarbonBasis basis,
                                             const RctiThresholds& thresholds = {}) {
  if (rows.empty()) throw TableError("stats table has no rows");
  auto measurement = [&](const StatsRow& r) {
    ModelMeasurement m;
    m.epsilon = r.epsilon;
    m.performance = r.accuracy;
    m.carbon = basis == CarbonBasis::Energy ? r.total_kwh : r.emissions_g;
    m.basis = basis;
    m.span_set = "stats";
    return m;
  };
  std::vector<MeasurementPair> pairs;
  std::vector<std::string> attacks;
  for (const auto& r : rows) {
    if (r.model != "robust") continue;
    const StatsRow* base = nullptr;
    for (const auto& b : rows)
      if (b.model == "baseline" && b.attack == r.attack && b.epsilon == r.epsilon) base = &b;
    if (!base)
      throw TableError("missing baseline row for " + r.attack + " epsilon " + format_double(r.epsilon));
    pairs.push_back({measurement(*base), measurement(r)});
    attacks.push_back(r.attack);
  }
  std::vector<ScoredRecord> out;
  if (pairs.empty()) return out;
  const auto records = run_rcti_sweep(pairs, thresholds);
  for (std::size_t i = 0; i < records.size(); ++i) out.push_back({attacks[i], records[i]});
  return out;
}

inline void write_rcti_csv(std::ostream& out, const std::vector<ScoredRecord>& records) {
  out << "attack,epsilon,delta_r,delta_c,rcti,elasticity\n";
  for (const auto& s : records)
    out << s.attack << ',' << format_double(s.record.epsilon) << ',' << format_ratio(s.record.delta_r) << ','
        << format_double(s.record.delta_c) << ',' << format_ratio(s.record.rcti) << ','
        << to_string(s.record.elasticity) << '\n';
}

inline std::vector<ScoredRecord> read_rcti_csv(std::istream& in, const std::string& origin = "rcti.csv") {
  detail::CsvTable t(in, {"attack", "epsilon", "delta_r", "delta_c", "rcti", "elasticity"}, origin);
  std::vector<ScoredRecord> out;
  for (std::size_t i = 0; i < t.size(); ++i) {
    ScoredRecord s;
    s.attack = t.at(i, "attack");
    s.record.epsilon = parse_number(t.at(i, "epsilon"), t.where(i) + " epsilon");
    s.record.delta_r = parse_ratio(t.at(i, "delta_r"), t.where(i) + " delta_r");
    s.record.delta_c = parse_number(t.at(i, "delta_c"), t.where(i) + " delta_c");
    s.record.rcti = parse_ratio(t.at(i, "rcti"), t.where(i) + " rcti");
    try {
      s.record.elasticity = parse_elasticity(t.at(i, "elasticity"));
    } catch (const std::invalid_argument& e) {
      throw TableError(t.where(i) + ": " + e.what());
    }
    out.push_back(std::move(s));
  }
  return out;
}

struct FigurePoint {
  std::string attack;
  double epsilon = 0.0;
  double value = 0.0;
  bool was_infinite = false;
};

struct FigureData {
  std::vector<FigurePoint> delta_r, delta_c, rcti;
};

/// Plot-ready series. Unbounded values are drawn at 0 and flagged.
inline FigureData figure_data(const std::vector<ScoredRecord>& records) {
  auto point = [](const ScoredRecord& s, const Ratio& r) {
    if (r.is_infinite()) return FigurePoint{s.attack, s.record.epsilon, 0.0, true};
    return FigurePoint{s.attack, s.record.epsilon, r.no_change ? 0.0 : r.value, false};
  };
  FigureData f;
  for (const auto& s : records) {
    f.delta_r.push_back(point(s, s.record.delta_r));
    f.delta_c.push_back(point(s, Ratio::finite(s.record.delta_c)));
    f.rcti.push_back(point(s, s.record.rcti));
  }
  return f;
}

inline void write_figure_csv(std::ostream& out, const std::vector<FigurePoint>& points) {
  out << "attack,epsilon,value,was_infinite\n";
  for (const auto& p : points)
    out << p.attack << ',' << format_double(p.epsilon) << ',' << format_double(p.value) << ','
        << (p.was_infinite ? "true" : "false") << '\n';
}

/// Writes delta_r.csv, delta_c.csv and rcti.csv under `dir`; returns the paths.
inline std::vector<std::filesystem::path> write_figure_data(const std::vector<ScoredRecord>& records,
                                                            const std::filesystem::path& dir) {
  const auto f = figure_data(records);
  std::vector<std::filesystem::path> paths;
  for (const auto& [name, series] : {std::pair{"delta_r.csv", &f.delta_r}, std::pair{"delta_c.csv", &f.delta_c},
                                     std::pair{"rcti.csv", &f.rcti}}) {
    auto out = detail::open_out(dir / name);
    write_figure_csv(out, *series);
    paths.push_back(dir / name);
  }
  return paths;
}

inline void write_stats_markdown(std::ostream& out, const std::vector<StatsRow>& rows) {
  out << "| Attack | Model | eps | CPU energy | RAM energy | Total energy | Accuracy (%) | Duration | Emission |\n"
      << "|---|---|---|---|---|---|---|---|---|\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "| %s | %s | %g | %.3E | %.3E | %.3E | %.2f | %.4f | %.3E |\n", r.attack.c_str(),
                  r.model.c_str(), r.epsilon, r.cpu_kwh, r.ram_kwh, r.total_kwh, 100.0 * r.accuracy, r.duration_s,
                  r.emissions_g);
    out << buf;
  }
  out << "\nEnergy = kWh, Duration = s, Emission = gCO2\n";
}

inline void write_rcti_markdown(std::ostream& out, const std::vector<ScoredRecord>& records) {
  out << "| Attack | eps | dR | dC | RCTI | Elasticity |\n|---|---|---|---|---|---|\n";
  auto cell = [](const Ratio& r) {
    if (r.no_change) return std::string("no change");
    if (r.is_infinite()) return std::string("inf");
    char b[64];
    std::snprintf(b, sizeof b, "%.5g", r.value);
    return std::string(b);
  };
  char buf[64];
  for (const auto& s : records) {
    std::snprintf(buf, sizeof buf, "%.3E", s.record.delta_c);
    out << "| " << s.attack << " | " << format_double(s.record.epsilon) << " | " << cell(s.record.delta_r) << " | "
        << buf << " | " << cell(s.record.rcti) << " | " << to_string(s.record.elasticity) << " |\n";
  }
}

}  // namespace rcti
