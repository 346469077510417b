#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stalesim {

enum class Direction { AtLeast, AtMost };

std::string to_string(Direction d);
Direction parse_direction(const std::string& text);

// One measurement. `batches` counts batches across all workers.
struct MetricsEvent {
  std::string run_id;
  std::uint64_t batches = 0;
  std::string metric;
  double value = 0.0;

  bool operator==(const MetricsEvent&) const = default;
};

struct RunTrace {
  std::string run_id;
  std::vector<MetricsEvent> events;
  bool diverged = false;

  void record(std::uint64_t batches, std::string metric, double value);
  std::vector<const MetricsEvent*> series(const std::string& metric) const;
  std::optional<double> last(const std::string& metric) const;
};

// Event names with a fixed meaning across workloads.
inline constexpr const char* kDivergedMetric = "diverged";
inline constexpr const char* kBatchLossMetric = "batch_loss";
inline constexpr const char* kProbeGradSqMetric = "probe_grad_sq";
inline constexpr const char* kProbeMuMetric = "probe_mu";

struct ConvergenceTarget {
  std::string metric;
  double threshold = 0.0;
  Direction direction = Direction::AtLeast;
  // Number of consecutive evaluations that must satisfy the target; 1 means
  // first crossing.
  int sustain = 1;

  bool satisfied_by(double value) const;
};

// First batch count at which the target holds, or nullopt if never.
std::optional<std::uint64_t> detect_convergence(const RunTrace& trace, const ConvergenceTarget& target);

struct RunSummary {
  std::string run_id;
  std::string fingerprint;
  std::string workload;
  std::string optimizer;
  int staleness = 0;
  int workers = 1;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> batches_to_target;
  double final_metric = 0.0;
};

struct SeedAggregate {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t n = 0;
};

// Mean and sample standard deviation of batches-to-target over runs that
// reached it. n = 0 yields a NaN mean.
SeedAggregate aggregate_seeds(std::span<const RunSummary> runs);

struct SlowdownCell {
  double mean_ratio = 0.0;
  double stddev = 0.0;
  std::size_t n = 0;
  std::size_t omitted = 0;
};

struct SlowdownTable {
  std::map<int, SlowdownCell> ratios;
  // Staleness levels at which no run reached the target.
  std::vector<int> omitted;
  // Per staleness, how many runs were dropped for not converging.
  std::map<int, std::size_t> omitted_runs;
};

// Normalizes batches-to-target by the s = 0 mean of the same group.
SlowdownTable normalize_slowdown(std::span<const RunSummary> group);

void write_trace_jsonl(std::ostream& os, const RunTrace& trace);
RunTrace read_trace_jsonl(std::istream& is);

inline constexpr const char* kSummaryHeader =
    "run_id,workload,optimizer,staleness,workers,seed,batches_to_target,final_metric";
std::string summary_csv_row(const RunSummary& s);
std::vector<RunSummary> read_summary_csv(std::istream& is);

}  // namespace stalesim
