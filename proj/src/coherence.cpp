#include "stalesim/coherence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace stalesim {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine similarity needs equal dimensions");
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) throw ZeroVectorError("cosine similarity of a zero vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

ParamVector probe_gradient(const Workload& workload, const ParamVector& params, std::span<const std::size_t> subset) {
  if (subset.empty()) throw std::invalid_argument("probe subset is empty");
  ParamVector grad;
  workload.objective(params, subset, &grad);
  if (!all_finite(grad)) throw NonFiniteError("probe gradient is not finite");
  return grad;
}

std::vector<std::size_t> choose_fixed_subset(std::size_t units, std::size_t count, Rng& rng) {
  std::vector<std::size_t> all(units);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (count >= units) return all;
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

CoherenceProbe::CoherenceProbe(std::vector<std::size_t> fixed_subset, std::size_t capacity, std::uint64_t interval)
    : subset_(std::move(fixed_subset)), capacity_(std::max<std::size_t>(capacity, 1)), interval_(interval) {}

const ProbeSample& CoherenceProbe::record(const Workload& workload, const ParamVector& params, std::uint64_t iter) {
  push(ProbeSample{iter, probe_gradient(workload, params, subset_)});
  return history_.back();
}

void CoherenceProbe::push(ProbeSample sample) {
  if (!history_.empty() && sample.iter <= history_.back().iter)
    throw std::invalid_argument("probe samples must arrive in increasing iteration order");
  history_.push_back(std::move(sample));
  while (history_.size() > capacity_) history_.pop_front();
}

Coherence gradient_coherence(std::span<const ProbeSample> history, std::uint64_t k, int s) {
  const ProbeSample* current = nullptr;
  for (const auto& h : history) {
    if (h.iter == k) current = &h;
  }
  if (!current) throw InsufficientHistoryError("no probe gradient at the current iteration");
  const double norm_sq = dot(current->grad, current->grad);
  if (norm_sq == 0.0) throw ZeroVectorError("current probe gradient is zero");
  const std::uint64_t window = static_cast<std::uint64_t>(std::max(s, 1));
  const std::uint64_t lo = k + 1 >= window ? k + 1 - window : 0;

  Coherence out{std::numeric_limits<double>::infinity(), k};
  for (const auto& h : history) {
    if (h.iter < lo || h.iter > k) continue;
    const double v = dot(current->grad, h.grad) / norm_sq;
    if (v < out.mu) out = Coherence{v, h.iter};
  }
  return out;
}

Coherence gradient_coherence(const std::deque<ProbeSample>& history, std::uint64_t k, int s) {
  const std::vector<ProbeSample> copy(history.begin(), history.end());
  return gradient_coherence(std::span<const ProbeSample>(copy), k, s);
}

double theorem_stepsize(std::uint64_t k, double mu, int s, double lipschitz) {
  return mu / (std::max(s, 1) * lipschitz * std::sqrt(static_cast<double>(k) + 1.0));
}

void TheoremParams::validate() const {
  if (!(mu > 0)) throw ConfigError("coherence lower bound mu must be positive");
  if (!(lipschitz > 0)) throw ConfigError("Lipschitz constant must be positive");
  if (sigma2 < 0) throw ConfigError("gradient variance must be non-negative");
  if (staleness < 1) throw ConfigError("theorem staleness must be at least 1");
  if (f0 < f_inf) throw ConfigError("initial objective lies below its infimum");
  if (horizon < 2) throw ConfigError("horizon must be at least 2");
}

double theorem_bound_at(const TheoremParams& p, double staleness) {
  const double t = static_cast<double>(p.horizon);
  return (staleness * p.lipschitz * (p.f0 - p.f_inf) / (p.mu * p.mu) + p.sigma2 * std::log(t) / staleness) /
         std::sqrt(t);
}

double theorem_bound(const TheoremParams& p) { return theorem_bound_at(p, static_cast<double>(p.staleness)); }

double optimal_staleness(const TheoremParams& p) {
  return std::sqrt(p.sigma2) * p.mu * std::sqrt(std::log(static_cast<double>(p.horizon)) / (p.lipschitz * (p.f0 - p.f_inf)));
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass:
      return "pass";
    case Verdict::Fail:
      return "fail";
    case Verdict::Inconclusive:
      return "inconclusive";
  }
  return "fail";
}

std::string VerificationReport::to_key_values() const {
  std::ostringstream os;
  os.precision(12);
  os << "verdict=" << to_string(verdict) << '\n'
     << "min_grad_sq=" << min_grad_sq << '\n'
     << "argmin_batches=" << argmin_batches << '\n'
     << "bound=" << bound << '\n'
     << "min_mu=" << min_mu << '\n'
     << "mean_mu=" << mean_mu << '\n'
     << "negative_mu_fraction=" << negative_mu_fraction << '\n'
     << "mu_assumption_holds=" << (mu_assumption_holds ? "true" : "false") << '\n'
     << "probes=" << probes << '\n'
     << "seeds=" << seeds << '\n'
     << "diverged=" << (diverged ? "true" : "false") << '\n';
  return os.str();
}

VerificationReport verify_bound(std::span<const RunTrace> traces, const TheoremParams& p) {
  p.validate();
  VerificationReport r;
  r.bound = theorem_bound(p);
  r.seeds = traces.size();

  std::map<std::uint64_t, std::pair<double, std::size_t>> grad_sq;
  std::vector<double> mus;
  for (const auto& t : traces) {
    r.diverged = r.diverged || t.diverged;
    for (const auto* e : t.series(kProbeGradSqMetric)) {
      auto& [sum, n] = grad_sq[e->batches];
      sum += e->value;
      ++n;
    }
    for (const auto* e : t.series(kProbeMuMetric)) mus.push_back(e->value);
  }
  if (grad_sq.empty()) throw MissingProbesError("traces carry no probe gradients");

  r.min_grad_sq = std::numeric_limits<double>::infinity();
  for (const auto& [batches, acc] : grad_sq) {
    const double mean = acc.first / static_cast<double>(acc.second);
    if (mean < r.min_grad_sq) {
      r.min_grad_sq = mean;
      r.argmin_batches = batches;
    }
  }
  r.probes = grad_sq.size();
  if (!mus.empty()) {
    r.min_mu = *std::min_element(mus.begin(), mus.end());
    r.mean_mu = std::accumulate(mus.begin(), mus.end(), 0.0) / static_cast<double>(mus.size());
    const auto negative = std::count_if(mus.begin(), mus.end(), [](double m) { return m < 0.0; });
    r.negative_mu_fraction = static_cast<double>(negative) / static_cast<double>(mus.size());
  }

  r.mu_assumption_holds = mus.empty() || r.min_mu >= p.mu;
  const bool holds = std::isfinite(r.min_grad_sq) && r.min_grad_sq <= r.bound && !r.diverged;
  if (holds && r.mu_assumption_holds) {
    r.verdict = Verdict::Pass;
  } else if (holds || r.negative_mu_fraction > 0.0) {
    r.verdict = Verdict::Inconclusive;
  } else {
    r.verdict = Verdict::Fail;
  }
  return r;
}

double estimate_lipschitz(const Workload& workload, const ParamVector& params, std::span<const std::size_t> subset,
                          int iterations, Rng& rng) {
  const std::size_t n = params.size();
  std::normal_distribution<double> normal(0.0, 1.0);
  ParamVector v(n);
  for (double& x : v) x = normal(rng);
  auto normalize = [](ParamVector& x) {
    const double norm = std::sqrt(dot(x, x));
    if (norm == 0.0) return 0.0;
    for (double& e : x) e /= norm;
    return norm;
  };
  normalize(v);
  double pnorm = std::sqrt(dot(params, params));
  const double h = 1e-5 * std::max(1.0, pnorm);
  double estimate = 0.0;
  ParamVector plus(n), minus(n), gp, gm;
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      plus[i] = params[i] + h * v[i];
      minus[i] = params[i] - h * v[i];
    }
    workload.objective(plus, subset, &gp);
    workload.objective(minus, subset, &gm);
    for (std::size_t i = 0; i < n; ++i) v[i] = (gp[i] - gm[i]) / (2.0 * h);
    estimate = normalize(v);
    if (estimate == 0.0) break;
  }
  return estimate;
}

double estimate_gradient_variance(const Workload& workload, const ParamVector& params,
                                  std::span<const std::size_t> units, std::size_t batch_size, int samples, Rng& rng) {
  if (units.empty() || samples < 1) throw std::invalid_argument("variance estimate needs units and samples");
  const ParamVector full = probe_gradient(workload, params, units);
  std::uniform_int_distribution<std::size_t> pick(0, units.size() - 1);
  double total = 0.0;
  std::vector<std::size_t> batch(std::max<std::size_t>(batch_size, 1));
  ParamVector g;
  for (int s = 0; s < samples; ++s) {
    for (auto& b : batch) b = units[pick(rng)];
    workload.objective(params, batch, &g);
    double d = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) d += (g[i] - full[i]) * (g[i] - full[i]);
    total += d;
  }
  return total / samples;
}

}  // namespace stalesim
