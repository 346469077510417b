#include "stalesim/metrics.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "stalesim/common.hpp"

namespace stalesim {

std::string to_string(Direction d) { return d == Direction::AtLeast ? "at_least" : "at_most"; }

Direction parse_direction(const std::string& text) {
  if (text == "at_least" || text == "at-least" || text == ">=") return Direction::AtLeast;
  if (text == "at_most" || text == "at-most" || text == "<=") return Direction::AtMost;
  throw ConfigError("unknown target direction '" + text + "'");
}

void RunTrace::record(std::uint64_t batches, std::string metric, double value) {
  events.push_back(MetricsEvent{run_id, batches, std::move(metric), value});
}

std::vector<const MetricsEvent*> RunTrace::series(const std::string& metric) const {
  std::vector<const MetricsEvent*> out;
  for (const auto& e : events) {
    if (e.metric == metric) out.push_back(&e);
  }
  return out;
}

std::optional<double> RunTrace::last(const std::string& metric) const {
  for (auto it = events.rbegin(); it != events.rend(); ++it) {
    if (it->metric == metric) return it->value;
  }
  return std::nullopt;
}

bool ConvergenceTarget::satisfied_by(double value) const {
  if (!std::isfinite(value)) return false;
  return direction == Direction::AtLeast ? value >= threshold : value <= threshold;
}

std::optional<std::uint64_t> detect_convergence(const RunTrace& trace, const ConvergenceTarget& target) {
  const auto points = trace.series(target.metric);
  if (points.empty()) throw UnknownMetricError("trace has no '" + target.metric + "' events");
  const int need = std::max(target.sustain, 1);
  int streak = 0;
  std::uint64_t first = 0;
  for (const auto* e : points) {
    if (target.satisfied_by(e->value)) {
      if (streak == 0) first = e->batches;
      if (++streak >= need) return first;
    } else {
      streak = 0;
    }
  }
  return std::nullopt;
}

namespace {

struct Moments {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double stddev = 0.0;
  std::size_t n = 0;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  m.n = xs.size();
  if (xs.empty()) return m;
  double sum = 0.0;
  for (double x : xs) sum += x;
  m.mean = sum / xs.size();
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.stddev = std::sqrt(ss / (xs.size() - 1));
  }
  return m;
}

std::vector<double> reached(std::span<const RunSummary> runs) {
  std::vector<double> xs;
  for (const auto& r : runs) {
    if (r.batches_to_target) xs.push_back(static_cast<double>(*r.batches_to_target));
  }
  return xs;
}

}  // namespace

SeedAggregate aggregate_seeds(std::span<const RunSummary> runs) {
  const Moments m = moments(reached(runs));
  return SeedAggregate{m.mean, m.stddev, m.n};
}

SlowdownTable normalize_slowdown(std::span<const RunSummary> group) {
  std::map<int, std::vector<RunSummary>> by_staleness;
  for (const auto& r : group) by_staleness[r.staleness].push_back(r);

  auto base_it = by_staleness.find(0);
  if (base_it == by_staleness.end()) throw MissingBaselineError("group has no s=0 runs");
  const Moments base = moments(reached(base_it->second));
  if (base.n == 0 || !(base.mean > 0.0)) throw MissingBaselineError("no s=0 run reached the target");

  SlowdownTable table;
  for (const auto& [s, runs] : by_staleness) {
    const std::vector<double> xs = reached(runs);
    const std::size_t dropped = runs.size() - xs.size();
    table.omitted_runs[s] = dropped;
    if (xs.empty()) {
      table.omitted.push_back(s);
      continue;
    }
    const Moments m = moments(xs);
    SlowdownCell cell;
    cell.mean_ratio = (s == 0) ? 1.0 : m.mean / base.mean;
    cell.stddev = m.stddev / base.mean;
    cell.n = m.n;
    cell.omitted = dropped;
    table.ratios[s] = cell;
  }
  return table;
}

void write_trace_jsonl(std::ostream& os, const RunTrace& trace) {
  for (const auto& e : trace.events) {
    nlohmann::ordered_json j;
    j["run_id"] = e.run_id;
    j["batches"] = e.batches;
    j["metric"] = e.metric;
    if (std::isfinite(e.value)) {
      j["value"] = e.value;
    } else {
      j["value"] = std::isnan(e.value) ? "nan" : (e.value > 0 ? "inf" : "-inf");
    }
    os << j.dump() << '\n';
  }
}

RunTrace read_trace_jsonl(std::istream& is) {
  RunTrace trace;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(std::string("malformed trace line: ") + ex.what(), line_no);
    }
    if (!j.contains("metric") || !j.contains("batches")) continue;
    MetricsEvent e;
    e.run_id = j.value("run_id", "");
    e.batches = j.at("batches").get<std::uint64_t>();
    e.metric = j.at("metric").get<std::string>();
    const auto& v = j.at("value");
    if (v.is_string()) {
      const auto s = v.get<std::string>();
      e.value = s == "inf" ? std::numeric_limits<double>::infinity()
                : s == "-inf" ? -std::numeric_limits<double>::infinity()
                              : std::numeric_limits<double>::quiet_NaN();
    } else {
      e.value = v.get<double>();
    }
    if (trace.run_id.empty()) trace.run_id = e.run_id;
    if (e.metric == kDivergedMetric) trace.diverged = true;
    trace.events.push_back(std::move(e));
  }
  return trace;
}

std::string summary_csv_row(const RunSummary& s) {
  std::ostringstream os;
  os.precision(17);
  os << s.run_id << ',' << s.workload << ',' << s.optimizer << ',' << s.staleness << ',' << s.workers << ','
     << s.seed << ',';
  if (s.batches_to_target) {
    os << *s.batches_to_target;
  } else {
    os << "NA";
  }
  os << ',' << s.final_metric;
  return os.str();
}

std::vector<RunSummary> read_summary_csv(std::istream& is) {
  std::vector<RunSummary> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line.rfind("run_id,", 0) == 0) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    if (cols.size() != 8) throw FormatError("summary row must have 8 columns", line_no);
    RunSummary r;
    try {
      r.run_id = cols[0];
      r.workload = cols[1];
      r.optimizer = cols[2];
      r.staleness = std::stoi(cols[3]);
      r.workers = std::stoi(cols[4]);
      r.seed = std::stoull(cols[5]);
      if (cols[6] != "NA") r.batches_to_target = std::stoull(cols[6]);
      r.final_metric = std::stod(cols[7]);
    } catch (const std::logic_error&) {
      throw FormatError("unparsable summary row", line_no);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace stalesim
