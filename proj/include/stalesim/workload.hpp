#pragma once

#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stalesim/common.hpp"
#include "stalesim/metrics.hpp"

namespace stalesim {

// Worker-private state that never travels through the caches (LDA topic
// assignments, for example).
struct WorkerLocal {
  virtual ~WorkerLocal() = default;
};

struct RawUpdate {
  ParamDelta value;
  // Gradients go through the worker's optimizer; anything else (count
  // deltas) is broadcast as is.
  bool is_gradient = true;
  double batch_loss = std::numeric_limits<double>::quiet_NaN();
};

class Workload {
 public:
  virtual ~Workload() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t dim() const = 0;
  // Number of shardable training units (samples, ratings, documents).
  virtual std::size_t num_units() const = 0;
  virtual bool sparse_updates() const { return false; }
  // Whether workers visit their shard in a reshuffled order every epoch.
  virtual bool shuffle_within_shard() const { return true; }
  virtual std::size_t default_batch_size(int workers) const = 0;

  virtual ParamVector init_params(Rng& rng) const = 0;
  virtual std::unique_ptr<WorkerLocal> make_local(std::span<const std::size_t> /*shard*/, Rng& /*rng*/) const {
    return nullptr;
  }
  // Folds a worker's initial local state into the shared initial parameters.
  virtual void contribute_initial(ParamVector& /*params*/, const WorkerLocal& /*local*/) const {}

  virtual RawUpdate compute_update(const ParamVector& params, std::span<const std::size_t> batch, WorkerLocal* local,
                                   Rng& rng) const = 0;

  virtual std::string metric_name() const = 0;
  virtual Direction metric_direction() const = 0;
  // Quality of `params` (worker 0's cache). Must not mutate anything.
  virtual double evaluate(const ParamVector& params, std::span<const WorkerLocal* const> locals) const = 0;

  // Deterministic objective over a subset of units, used by the coherence
  // probe. Workloads without one throw.
  virtual bool has_objective() const { return false; }
  virtual double objective(const ParamVector& params, std::span<const std::size_t> units, ParamVector* grad) const;
};

}  // namespace stalesim
