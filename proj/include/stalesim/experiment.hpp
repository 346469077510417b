#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "stalesim/coherence.hpp"
#include "stalesim/config.hpp"
#include "stalesim/datasets.hpp"
#include "stalesim/simcore.hpp"
#include "stalesim/workload.hpp"

namespace stalesim {

enum ExitCode : int {
  kExitOk = 0,
  kExitFail = 1,
  kExitConfig = 2,
  kExitDiverged = 3,
  kExitInconclusive = 4,
};

// Datasets loaded or generated once and shared read-only across runs.
class DatasetCache {
 public:
  std::shared_ptr<const ClassificationSplit> classification(const ExperimentConfig& cfg);
  std::shared_ptr<const RatingMatrix> ratings(const ExperimentConfig& cfg);
  std::shared_ptr<const Corpus> corpus(const ExperimentConfig& cfg);

 private:
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const ClassificationSplit>> classification_;
  std::map<std::string, std::shared_ptr<const RatingMatrix>> ratings_;
  std::map<std::string, std::shared_ptr<const Corpus>> corpora_;
};

std::shared_ptr<const Workload> build_workload(const ExperimentConfig& cfg, DatasetCache& cache);

RunOptions make_run_options(const ExperimentConfig& cfg, std::uint64_t seed);

struct RunOutcome {
  RunTrace trace;
  RunSummary summary;
};

RunSummary summarize(const ExperimentConfig& cfg, std::uint64_t seed, const RunTrace& trace, const Workload& workload);
RunOutcome execute_run(const ExperimentConfig& cfg, std::uint64_t seed, DatasetCache& cache);

// Cartesian product of the sweep axes (depth x optimizer x workers x
// staleness); an empty axis keeps the base value.
std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& base);
// Identifies a sweep cell up to its staleness.
std::string sweep_group(const ExperimentConfig& cfg);

struct SlowdownRow {
  std::string group;
  int staleness = 0;
  std::optional<double> mean_ratio;
  std::optional<double> stddev;
  std::size_t n = 0;
  std::size_t omitted = 0;
};

inline constexpr const char* kSlowdownHeader = "group,staleness,mean_ratio,std,n,omitted";
std::string slowdown_csv_row(const SlowdownRow& row);

// One row per (group, staleness) cell in first-appearance order.
std::vector<SlowdownRow> slowdown_rows(const std::vector<std::pair<std::string, RunSummary>>& labelled);

struct TheoremSetup {
  TheoremParams params;
  std::uint64_t horizon = 0;
};

// Resolves the theorem constants for `cfg` (estimating L and sigma^2 when
// asked). Throws ConfigError when a required constant is unavailable.
TheoremSetup resolve_theorem(const ExperimentConfig& cfg, DatasetCache& cache);

struct VerifyOutcome {
  VerificationReport report;
  std::vector<RunTrace> traces;
  TheoremSetup setup;
};

VerifyOutcome run_verification(const ExperimentConfig& cfg, DatasetCache& cache);

struct CoherenceRow {
  std::uint64_t iter = 0;
  int lag = 0;
  double cosine = 0.0;
  double mu = 0.0;
};

inline constexpr const char* kCoherenceHeader = "iter,m,cosine,mu_k";
// Seed-averaged cosines and coherence per (probe iteration, lag).
std::vector<CoherenceRow> coherence_rows(const std::vector<RunTrace>& traces, int workers, int max_lag);

void write_trace_file(const std::filesystem::path& path, const RunTrace& trace,
                      const std::optional<VerificationReport>& report = std::nullopt);
void append_summaries(const std::filesystem::path& path, const std::vector<RunSummary>& rows);

int cmd_run(const std::filesystem::path& config, std::ostream& out, std::ostream& err);
int cmd_sweep(const std::filesystem::path& config, int jobs, std::ostream& out, std::ostream& err);
int cmd_verify_theorem(const std::filesystem::path& config, std::ostream& out, std::ostream& err);
int cmd_probe(const std::filesystem::path& config, std::ostream& out, std::ostream& err);
int cmd_report(const std::filesystem::path& outdir, std::ostream& out, std::ostream& err);

}  // namespace stalesim
