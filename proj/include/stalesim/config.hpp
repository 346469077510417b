#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stalesim/datasets.hpp"
#include "stalesim/delay.hpp"
#include "stalesim/lda.hpp"
#include "stalesim/metrics.hpp"
#include "stalesim/mf.hpp"
#include "stalesim/optim.hpp"
#include "stalesim/quadratic.hpp"
#include "stalesim/simcore.hpp"

namespace stalesim {

// Flat `section.key = value` text. '#' starts a comment; blank lines are
// ignored; keys are unique.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& is);
  static KeyValueConfig parse_string(const std::string& text);
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  const std::string* find(const std::string& key) const;
  bool contains(const std::string& key) const { return entries_.count(key) != 0; }
  void erase(const std::string& key) { entries_.erase(key); }
  const std::map<std::string, std::string>& entries() const { return entries_; }

  // Sorted `key = value` lines.
  std::string serialize() const;

  bool operator==(const KeyValueConfig&) const = default;

 private:
  std::map<std::string, std::string> entries_;
};

std::string format_double(double v);

struct DataConfig {
  // synthetic | mnist | movielens | bow
  std::string source = "synthetic";
  std::uint64_t seed = 1;
  std::string path;
  std::string images;
  std::string labels;
  std::string test_images;
  std::string test_labels;
  ClusterParams clusters;
  LowRankParams low_rank;
  LdaCorpusParams corpus;
};

struct DelayConfig {
  // uniform | geometric
  std::string kind = "uniform";
  // Uniform bound; for the geometric model, the uniform level whose mean the
  // non-stragglers are matched to when nonstraggler_success is unset.
  int staleness = 0;
  double straggler_success = 0.1;
  std::optional<double> nonstraggler_success;
  int stragglers = 1;
  int cap = 100;
};

struct TheoremConfig {
  std::optional<double> mu;
  std::optional<double> lipschitz;
  bool estimate_lipschitz = false;
  int lipschitz_iterations = 50;
  std::optional<double> sigma2;
  bool estimate_sigma2 = false;
  int variance_samples = 32;
  // Iterations; 0 takes budget / workers.
  std::uint64_t horizon = 0;
  std::optional<double> f_inf;
};

struct SweepConfig {
  std::vector<int> staleness;
  std::vector<int> workers;
  std::vector<std::string> optimizer;
  std::vector<int> depth;
};

struct ExperimentConfig {
  // mlr | dnn | vae | mf | lda | quadratic
  std::string workload = "mlr";
  int depth = 0;
  int width = 256;
  int latent_dim = 32;
  MfSpec mf;
  LdaSpec lda;
  QuadraticSpec quadratic;
  DataConfig data;

  OptimizerSpec optimizer = Sgd{};
  DelayConfig delay;

  int workers = 1;
  std::vector<std::uint64_t> seeds{1};
  // 0 selects the workload default.
  std::size_t batch_size = 0;
  std::uint64_t budget = 77824;
  std::uint64_t eval_interval = 50;
  std::optional<ConvergenceTarget> target;
  bool stop_at_target = true;
  bool record_batch_loss = true;

  bool probe_enabled = false;
  ProbeOptions probe;
  TheoremConfig theorem;

  std::string output_dir = "out";
  SweepConfig sweep;
};

ExperimentConfig parse_experiment(const KeyValueConfig& kv);
// Canonical form: every key that affects the configuration, and nothing else.
KeyValueConfig to_key_values(const ExperimentConfig& cfg);
ExperimentConfig load_experiment(const std::filesystem::path& path);

// Hash of the canonical form without seeds, output location and sweep axes.
std::string fingerprint(const ExperimentConfig& cfg);
std::string make_run_id(const std::string& fingerprint, std::uint64_t seed);

DelaySpec delay_spec(const ExperimentConfig& cfg);
// e.g. "mlr", "dnn-d3", "vae-d1".
std::string workload_label(const ExperimentConfig& cfg);

}  // namespace stalesim
