#include "stalesim/simcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace stalesim {

std::vector<std::vector<std::size_t>> partition_shards(std::size_t units, int workers, Rng& rng) {
  if (workers < 1) throw ConfigError("need at least one worker");
  if (units < static_cast<std::size_t>(workers)) throw ConfigError("fewer training units than workers");
  std::vector<std::size_t> perm(units);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t base = units / static_cast<std::size_t>(workers);
  std::vector<std::vector<std::size_t>> shards(static_cast<std::size_t>(workers));
  for (int p = 0; p < workers; ++p) {
    const std::size_t lo = base * static_cast<std::size_t>(p);
    const std::size_t hi = p + 1 == workers ? units : lo + base;
    shards[static_cast<std::size_t>(p)].assign(perm.begin() + static_cast<std::ptrdiff_t>(lo),
                                               perm.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  return shards;
}

ShardCursor::ShardCursor(std::vector<std::size_t> shard, bool shuffle, Rng& rng)
    : shard_(std::move(shard)), order_(shard_), shuffle_(shuffle) {
  if (shard_.empty()) throw ConfigError("empty shard");
  if (shuffle_) std::shuffle(order_.begin(), order_.end(), rng);
}

std::vector<std::size_t> ShardCursor::next(std::size_t count, Rng& rng) {
  std::vector<std::size_t> out;
  out.reserve(count);
  while (out.size() < count) {
    if (pos_ == order_.size()) {
      pos_ = 0;
      if (shuffle_) std::shuffle(order_.begin(), order_.end(), rng);
    }
    out.push_back(order_[pos_++]);
  }
  return out;
}

namespace {

bool delta_finite(const ParamDelta& d) {
  if (const auto* dense = std::get_if<ParamVector>(&d)) return all_finite(*dense);
  return all_finite(std::get<SparseDelta>(d).value);
}

}  // namespace

Simulation::Simulation(std::shared_ptr<const Workload> workload, SimOptions options, SimObserver observer)
    : workload_(std::move(workload)), options_(std::move(options)), observer_(std::move(observer)) {
  if (!workload_) throw std::invalid_argument("simulation needs a workload");
  const int P = options_.workers;
  if (P < 1) throw ConfigError("need at least one worker");
  validate(options_.delay, P);
  validate(options_.optimizer);
  batch_size_ = options_.batch_size ? options_.batch_size : workload_->default_batch_size(P);
  if (batch_size_ == 0) throw ConfigError("batch size must be positive");
  bound_ = max_extra_delay(options_.delay);

  Rng init_rng = make_rng(options_.seed, Stream::Init);
  ParamVector initial = workload_->init_params(init_rng);
  if (initial.size() != workload_->dim()) throw std::logic_error("workload initial parameters have wrong size");

  Rng shard_rng = make_rng(options_.seed, Stream::Shard);
  auto shards = partition_shards(workload_->num_units(), P, shard_rng);

  delay_rng_ = make_rng(options_.seed, Stream::Delay);
  for (int p = 0; p < P; ++p) {
    worker_rngs_.push_back(make_rng(options_.seed, Stream::Worker, static_cast<std::uint64_t>(p)));
    auto& rng = worker_rngs_.back();
    const auto& shard = shards[static_cast<std::size_t>(p)];
    locals_.push_back(workload_->make_local(shard, rng));
    if (locals_.back()) workload_->contribute_initial(initial, *locals_.back());
    cursors_.emplace_back(shard, workload_->shuffle_within_shard(), rng);
    optimizers_.emplace_back(options_.optimizer, workload_->dim());
  }
  for (int p = 0; p < P; ++p) caches_.push_back(WorkerCache{p, initial});
}

std::vector<const WorkerLocal*> Simulation::locals() const {
  std::vector<const WorkerLocal*> out;
  out.reserve(locals_.size());
  for (const auto& l : locals_) out.push_back(l.get());
  return out;
}

void Simulation::begin_iteration() {
  if (arrivals_applied_) return;
  auto due = queue_.drain(iter_);
  for (const auto& d : due) {
    if (d.arrival_iter != iter_ || d.arrival_iter < d.msg.gen_iter + 1 ||
        d.arrival_iter - d.msg.gen_iter - 1 > static_cast<std::uint64_t>(bound_))
      throw std::logic_error("update delivered outside its staleness bound");
  }
  deliver(std::move(due));
  arrivals_applied_ = true;
}

void Simulation::deliver(std::vector<Delivery> arrivals) {
  for (const auto& d : arrivals) {
    add_into(caches_[static_cast<std::size_t>(d.destination)].params, *d.msg.delta);
    if (observer_.on_deliver) observer_.on_deliver(d);
  }
}

std::vector<MetricsEvent> Simulation::step() {
  begin_iteration();
  const int P = options_.workers;
  if (options_.stepsize) {
    const double lr = options_.stepsize(iter_);
    for (auto& o : optimizers_) o.set_learning_rate(lr);
  }

  std::vector<UpdateMsg> msgs;
  msgs.reserve(static_cast<std::size_t>(P));
  double loss_sum = 0.0;
  int loss_count = 0;
  for (int p = 0; p < P; ++p) {
    const auto idx = static_cast<std::size_t>(p);
    auto& rng = worker_rngs_[idx];
    const auto batch = cursors_[idx].next(batch_size_, rng);
    RawUpdate raw = workload_->compute_update(caches_[idx].params, batch, locals_[idx].get(), rng);
    if (!delta_finite(raw.value)) throw NonFiniteError("worker produced a non-finite update");
    auto delta = std::make_shared<ParamDelta>(raw.is_gradient ? optimizers_[idx].apply(raw.value) : std::move(raw.value));
    if (!delta_finite(*delta)) throw NonFiniteError("optimizer produced a non-finite update");
    msgs.push_back(UpdateMsg{p, iter_, std::move(delta)});
    if (std::isfinite(raw.batch_loss)) {
      loss_sum += raw.batch_loss;
      ++loss_count;
    }
  }

  const DelayMatrix delays = sample_iteration_delays(options_.delay, P, delay_rng_);
  for (const auto& m : msgs) {
    if (observer_.on_generate) observer_.on_generate(m);
    queue_.schedule(m, delays.row(m.source));
  }

  ++iter_;
  arrivals_applied_ = false;
  std::vector<MetricsEvent> events;
  if (loss_count > 0) events.push_back(MetricsEvent{"", batches_processed(), kBatchLossMetric, loss_sum / loss_count});
  return events;
}

double Simulation::evaluate() {
  begin_iteration();
  const auto ls = locals();
  return workload_->evaluate(caches_[0].params, ls);
}

void Simulation::flush() { deliver(queue_.drain(std::numeric_limits<std::uint64_t>::max())); }

namespace {

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

RunTrace run_simulation(std::shared_ptr<const Workload> workload, const RunOptions& options) {
  RunTrace trace;
  trace.run_id = options.run_id;
  Simulation sim(workload, options.sim, options.observer);
  const auto P = static_cast<std::uint64_t>(options.sim.workers);
  const std::uint64_t iterations = options.budget / P;
  const std::string metric = workload->metric_name();
  if (options.target && options.target->metric != metric && options.target->metric != kBatchLossMetric)
    throw ConfigError("target metric '" + options.target->metric + "' is not produced by workload " + workload->kind());

  std::optional<CoherenceProbe> probe;
  int window = 1;
  int max_lag = 0;
  if (options.probe) {
    const auto& po = options.probe.value();
    if (!workload->has_objective()) throw ConfigError("workload " + workload->kind() + " has no probe objective");
    if (po.interval == 0) throw ConfigError("probe interval must be positive");
    window = po.window > 0 ? po.window : std::max(max_extra_delay(options.sim.delay) + 1, 1);
    max_lag = po.max_lag;
    const std::size_t window_probes = static_cast<std::size_t>(window) / po.interval + 1;
    const std::size_t history =
        po.history ? po.history
                   : std::max({window_probes, static_cast<std::size_t>(std::max(max_lag, 0)) + 1, std::size_t{10}});
    Rng probe_rng = make_rng(options.sim.seed, Stream::Probe);
    probe.emplace(choose_fixed_subset(workload->num_units(), po.subset_size, probe_rng), history, po.interval);
  }

  int streak = 0;
  auto target_hit = [&](double value) {
    if (!options.target || !options.stop_at_target) return false;
    if (options.target->satisfied_by(value)) {
      ++streak;
    } else {
      streak = 0;
    }
    return streak >= std::max(options.target->sustain, 1);
  };

  auto mark_diverged = [&](std::uint64_t batches) {
    trace.record(batches, kDivergedMetric, 1.0);
    trace.diverged = true;
  };

  for (std::uint64_t k = 0;; ++k) {
    sim.begin_iteration();
    const std::uint64_t batches = k * P;
    if (!all_finite(sim.cache(0).params)) {
      mark_diverged(batches);
      break;
    }
    if (probe && probe->due(k)) {
      const ProbeSample* recorded = nullptr;
      try {
        recorded = &probe->record(*workload, sim.cache(0).params, k);
      } catch (const NonFiniteError&) {
        mark_diverged(batches);
        break;
      }
      const auto& sample = *recorded;
      trace.record(batches, kProbeGradSqMetric, squared_norm(sample.grad));
      const auto& hist = probe->history();
      for (int lag = 1; lag <= max_lag; ++lag) {
        if (hist.size() <= static_cast<std::size_t>(lag)) break;
        try {
          trace.record(batches, probe_cosine_metric(lag),
                       cosine_similarity(sample.grad, hist[hist.size() - 1 - static_cast<std::size_t>(lag)].grad));
        } catch (const ZeroVectorError&) {
        }
      }
      try {
        trace.record(batches, kProbeMuMetric, gradient_coherence(hist, k, window).mu);
      } catch (const ZeroVectorError&) {
      }
    }

    const bool last = k == iterations;
    if (options.eval_interval > 0 && (k % options.eval_interval == 0 || last)) {
      double value = 0.0;
      try {
        value = sim.evaluate();
      } catch (const NonFiniteError&) {
        value = std::numeric_limits<double>::quiet_NaN();
      }
      if (!std::isfinite(value)) {
        mark_diverged(batches);
        break;
      }
      trace.record(batches, metric, value);
      if (options.target && options.target->metric == metric && target_hit(value)) break;
    }
    if (last) break;

    std::vector<MetricsEvent> events;
    try {
      events = sim.step();
    } catch (const NonFiniteError&) {
      mark_diverged(batches);
      break;
    }
    bool stop = false;
    for (auto& e : events) {
      if (e.metric == kBatchLossMetric) {
        if (options.record_batch_loss) trace.record(e.batches, e.metric, e.value);
        if (options.target && options.target->metric == kBatchLossMetric && target_hit(e.value)) stop = true;
      }
    }
    if (stop) break;
  }
  return trace;
}

}  // namespace stalesim
