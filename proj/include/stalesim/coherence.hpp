#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "stalesim/common.hpp"
#include "stalesim/metrics.hpp"
#include "stalesim/workload.hpp"

namespace stalesim {

double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Mean gradient of the workload objective over a fixed subset of units.
ParamVector probe_gradient(const Workload& workload, const ParamVector& params, std::span<const std::size_t> subset);

std::vector<std::size_t> choose_fixed_subset(std::size_t units, std::size_t count, Rng& rng);

struct ProbeSample {
  std::uint64_t iter = 0;
  ParamVector grad;
};

// Bounded history of probe gradients, oldest first.
class CoherenceProbe {
 public:
  CoherenceProbe(std::vector<std::size_t> fixed_subset, std::size_t capacity, std::uint64_t interval);

  bool due(std::uint64_t iter) const { return interval_ > 0 && iter % interval_ == 0; }
  const ProbeSample& record(const Workload& workload, const ParamVector& params, std::uint64_t iter);
  void push(ProbeSample sample);

  const std::deque<ProbeSample>& history() const { return history_; }
  const std::vector<std::size_t>& fixed_subset() const { return subset_; }
  std::size_t capacity() const { return capacity_; }

 private:
  std::vector<std::size_t> subset_;
  std::size_t capacity_;
  std::uint64_t interval_;
  std::deque<ProbeSample> history_;
};

struct Coherence {
  double mu = 0.0;
  std::uint64_t argmin_iter = 0;
};

// min over history entries with k - s + 1 <= t <= k of <g_k, g_t> / ||g_k||^2.
// g_k is the entry stamped k.
Coherence gradient_coherence(std::span<const ProbeSample> history, std::uint64_t k, int s);
Coherence gradient_coherence(const std::deque<ProbeSample>& history, std::uint64_t k, int s);

// mu / (s L sqrt(k + 1)); the shift defines the step at k = 0.
double theorem_stepsize(std::uint64_t k, double mu, int s, double lipschitz);

struct TheoremParams {
  double mu = 1.0;
  double lipschitz = 1.0;
  double sigma2 = 0.0;
  int staleness = 1;
  double f0 = 1.0;
  double f_inf = 0.0;
  std::uint64_t horizon = 2;

  void validate() const;
};

// (s L (F0 - Finf) / mu^2 + sigma^2 ln T / s) / sqrt(T)
double theorem_bound(const TheoremParams& p);
// Same expression with a real-valued staleness, for scanning.
double theorem_bound_at(const TheoremParams& p, double staleness);
// sigma mu sqrt(ln T / (L (F0 - Finf)))
double optimal_staleness(const TheoremParams& p);

enum class Verdict { Pass, Fail, Inconclusive };
std::string to_string(Verdict v);

struct VerificationReport {
  double min_grad_sq = 0.0;
  std::uint64_t argmin_batches = 0;
  double bound = 0.0;
  Verdict verdict = Verdict::Fail;
  double min_mu = 0.0;
  double mean_mu = 0.0;
  double negative_mu_fraction = 0.0;
  // Measured min mu_k stayed at or above the configured mu.
  bool mu_assumption_holds = true;
  std::size_t probes = 0;
  std::size_t seeds = 0;
  bool diverged = false;

  // "key=value" lines.
  std::string to_key_values() const;
};

// Reads probe_grad_sq / probe_mu events from one trace per seed. The
// expected squared norm is the across-seed mean at each probed batch count.
// A bound that holds while the measured coherence falls below p.mu, or one
// that fails while some mu_k < 0, is inconclusive.
VerificationReport verify_bound(std::span<const RunTrace> traces, const TheoremParams& p);

// Power iteration on finite-difference Hessian-vector products of the
// objective over `subset` at `params`.
double estimate_lipschitz(const Workload& workload, const ParamVector& params, std::span<const std::size_t> subset,
                          int iterations, Rng& rng);

// Mean squared deviation of minibatch gradients from the full-subset
// gradient at `params`.
double estimate_gradient_variance(const Workload& workload, const ParamVector& params,
                                  std::span<const std::size_t> units, std::size_t batch_size, int samples, Rng& rng);

}  // namespace stalesim
