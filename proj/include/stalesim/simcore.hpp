#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stalesim/coherence.hpp"
#include "stalesim/delay.hpp"
#include "stalesim/metrics.hpp"
#include "stalesim/optim.hpp"
#include "stalesim/workload.hpp"

namespace stalesim {

struct WorkerCache {
  int worker_id = 0;
  ParamVector params;
};

// Splits `units` into `workers` contiguous blocks of a seeded permutation;
// the last block takes the remainder.
std::vector<std::vector<std::size_t>> partition_shards(std::size_t units, int workers, Rng& rng);

// Walks a worker's shard in batches, optionally reshuffling every epoch.
class ShardCursor {
 public:
  ShardCursor(std::vector<std::size_t> shard, bool shuffle, Rng& rng);
  std::vector<std::size_t> next(std::size_t count, Rng& rng);
  const std::vector<std::size_t>& shard() const { return shard_; }

 private:
  std::vector<std::size_t> shard_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  bool shuffle_;
};

struct SimOptions {
  int workers = 1;
  DelaySpec delay = UniformBounded{0};
  OptimizerSpec optimizer = Sgd{};
  // 0 selects the workload's default.
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
  // When set, replaces the optimizer's learning rate at every iteration.
  std::function<double(std::uint64_t)> stepsize;
};

struct SimObserver {
  std::function<void(const UpdateMsg&)> on_generate;
  std::function<void(const Delivery&)> on_deliver;
};

// Lockstep simulation: every iteration each worker reads its own cache,
// computes an update on one batch, and broadcasts the post-optimizer delta
// to all caches (its own included) with sampled delays.
class Simulation {
 public:
  Simulation(std::shared_ptr<const Workload> workload, SimOptions options, SimObserver observer = {});

  // Applies the arrivals due at the current iteration. Idempotent.
  void begin_iteration();
  // Runs one iteration for every worker and advances the clock. Returns the
  // mean batch loss when the workload reports one.
  std::vector<MetricsEvent> step();
  // Workload metric on worker 0's cache, after pending arrivals for the
  // current iteration have been applied.
  double evaluate();
  // Delivers everything still in flight, regardless of arrival time.
  void flush();

  std::uint64_t iteration() const { return iter_; }
  std::uint64_t batches_processed() const { return iter_ * static_cast<std::uint64_t>(options_.workers); }
  int workers() const { return options_.workers; }
  std::size_t batch_size() const { return batch_size_; }
  const WorkerCache& cache(int worker) const { return caches_.at(static_cast<std::size_t>(worker)); }
  const TransitQueue& queue() const { return queue_; }
  const Workload& workload() const { return *workload_; }
  const Optimizer& optimizer(int worker) const { return optimizers_.at(static_cast<std::size_t>(worker)); }
  std::vector<const WorkerLocal*> locals() const;
  const SimOptions& options() const { return options_; }

 private:
  void deliver(std::vector<Delivery> arrivals);

  std::shared_ptr<const Workload> workload_;
  SimOptions options_;
  SimObserver observer_;
  std::size_t batch_size_ = 0;
  std::uint64_t iter_ = 0;
  bool arrivals_applied_ = false;
  int bound_ = 1;
  std::vector<WorkerCache> caches_;
  std::vector<Optimizer> optimizers_;
  std::vector<std::unique_ptr<WorkerLocal>> locals_;
  std::vector<ShardCursor> cursors_;
  std::vector<Rng> worker_rngs_;
  Rng delay_rng_;
  TransitQueue queue_;
};

struct ProbeOptions {
  std::uint64_t interval = 50;
  std::size_t subset_size = 1000;
  // Cosines against the probe gradients 1..max_lag probes back.
  int max_lag = 10;
  // Coherence window (iterations); 0 uses max(s, 1) of the delay spec.
  int window = 0;
  // History depth; 0 uses max(window, max_lag, 10).
  std::size_t history = 0;
};

struct RunOptions {
  SimOptions sim;
  std::string run_id;
  // Total batches across workers; the run performs budget / workers
  // iterations.
  std::uint64_t budget = 0;
  std::uint64_t eval_interval = 50;
  std::optional<ConvergenceTarget> target;
  bool stop_at_target = true;
  bool record_batch_loss = true;
  std::optional<ProbeOptions> probe;
  SimObserver observer;
};

inline std::string probe_cosine_metric(int lag) { return "probe_cos_" + std::to_string(lag); }

// Initializes from the master seed, steps until the budget is spent or the
// target fires, and evaluates every eval_interval iterations. Numerical
// divergence is recorded as a "diverged" event and ends the run.
RunTrace run_simulation(std::shared_ptr<const Workload> workload, const RunOptions& options);

}  // namespace stalesim
