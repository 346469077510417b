#include "stalesim/delay.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace stalesim {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

int sample_geometric(double success, int cap, Rng& rng) {
  if (success >= 1.0) return 0;
  std::geometric_distribution<int> dist(success);
  return std::min(dist(rng), cap);
}

}  // namespace

void validate(const DelaySpec& spec, int workers) {
  std::visit(overloaded{
                 [](const UniformBounded& u) {
                   if (u.max_staleness < 0) throw ConfigError("staleness must be non-negative");
                 },
                 [workers](const GeometricStraggler& g) {
                   if (!(g.straggler_success > 0.0 && g.straggler_success <= 1.0))
                     throw ConfigError("straggler success probability must lie in (0, 1]");
                   if (!(g.nonstraggler_success > 0.0 && g.nonstraggler_success <= 1.0))
                     throw ConfigError("non-straggler success probability must lie in (0, 1]");
                   if (g.straggler_count < 0 || g.straggler_count > workers)
                     throw ConfigError("straggler count must lie in [0, workers]");
                   if (g.cap < 1) throw ConfigError("geometric delay cap must be at least 1");
                 },
             },
             spec);
}

std::string describe(const DelaySpec& spec) {
  std::ostringstream os;
  std::visit(overloaded{
                 [&](const UniformBounded& u) { os << "uniform(s=" << u.max_staleness << ")"; },
                 [&](const GeometricStraggler& g) {
                   os << "geometric(p_strag=" << g.straggler_success << ",p_fast=" << g.nonstraggler_success
                      << ",stragglers=" << g.straggler_count << ",cap=" << g.cap << ")";
                 },
             },
             spec);
  return os.str();
}

int max_extra_delay(const DelaySpec& spec) {
  return std::visit(overloaded{
                        [](const UniformBounded& u) { return std::max(u.max_staleness - 1, 0); },
                        [](const GeometricStraggler& g) { return g.cap; },
                    },
                    spec);
}

int sample_delay_uniform(int max_staleness, Rng& rng) {
  if (max_staleness <= 1) return 0;
  std::uniform_int_distribution<int> dist(0, max_staleness - 1);
  return dist(rng);
}

DelayMatrix sample_iteration_delays(const DelaySpec& spec, int workers, Rng& rng) {
  DelayMatrix m(workers);
  if (const auto* u = std::get_if<UniformBounded>(&spec)) {
    if (u->max_staleness <= 1) return m;
    for (int src = 0; src < workers; ++src) {
      for (int dst = 0; dst < workers; ++dst) m.at(src, dst) = sample_delay_uniform(u->max_staleness, rng);
    }
    return m;
  }
  const auto& g = std::get<GeometricStraggler>(spec);
  std::vector<int> order(static_cast<std::size_t>(workers));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<char> straggler(static_cast<std::size_t>(workers), 0);
  for (int i = 0; i < g.straggler_count && i < workers; ++i) straggler[order[i]] = 1;
  for (int src = 0; src < workers; ++src) {
    const double p = straggler[src] ? g.straggler_success : g.nonstraggler_success;
    const int r = sample_geometric(p, g.cap, rng);
    for (int dst = 0; dst < workers; ++dst) m.at(src, dst) = r;
  }
  return m;
}

double geometric_mean(double success) { return (1.0 - success) / success; }

MeanMatch match_mean_geometric(int uniform_staleness, double straggler_success, int straggler_count, int workers) {
  if (workers < 1) throw ConfigError("worker count must be positive");
  if (straggler_count < 0 || straggler_count > workers) throw ConfigError("straggler count must lie in [0, workers]");
  if (!(straggler_success > 0.0 && straggler_success <= 1.0))
    throw ConfigError("straggler success probability must lie in (0, 1]");

  const double target = std::max(uniform_staleness - 1, 0) / 2.0;
  const double fraction = static_cast<double>(straggler_count) / workers;
  const double straggler_part = fraction * geometric_mean(straggler_success);

  MeanMatch out;
  if (straggler_count == workers) {
    out.nonstraggler_success = 1.0;
    out.warning = "every worker straggles; non-straggler delay is unused and set to zero";
    return out;
  }
  const double remaining = target - straggler_part;
  // Relative slack absorbs rounding when the target equals the straggler share.
  if (remaining < -1e-12 * std::max(1.0, target)) {
    std::ostringstream os;
    os << "stragglers alone contribute mean delay " << straggler_part << " which exceeds the target " << target;
    throw InfeasibleMeanError(os.str());
  }
  if (remaining <= 0.0) {
    out.nonstraggler_success = 1.0;
    return out;
  }
  const double fast_mean = remaining / (1.0 - fraction);
  out.nonstraggler_success = 1.0 / (1.0 + fast_mean);
  return out;
}

void TransitQueue::schedule(const UpdateMsg& msg, std::span<const int> delays) {
  for (std::size_t dst = 0; dst < delays.size(); ++dst) {
    const std::uint64_t arrival = msg.gen_iter + 1 + static_cast<std::uint64_t>(delays[dst]);
    pending_[arrival].push_back(Delivery{static_cast<int>(dst), arrival, msg});
    ++pending_count_;
  }
}

std::vector<Delivery> TransitQueue::drain(std::uint64_t iter) {
  std::vector<Delivery> out;
  auto end = pending_.upper_bound(iter);
  for (auto it = pending_.begin(); it != end; ++it) {
    for (auto& d : it->second) out.push_back(std::move(d));
  }
  pending_.erase(pending_.begin(), end);
  pending_count_ -= out.size();
  std::stable_sort(out.begin(), out.end(), [](const Delivery& a, const Delivery& b) {
    if (a.msg.gen_iter != b.msg.gen_iter) return a.msg.gen_iter < b.msg.gen_iter;
    if (a.msg.source != b.msg.source) return a.msg.source < b.msg.source;
    return a.destination < b.destination;
  });
  return out;
}

std::optional<std::uint64_t> TransitQueue::next_arrival() const {
  if (pending_.empty()) return std::nullopt;
  return pending_.begin()->first;
}

std::optional<std::uint64_t> TransitQueue::oldest_pending_gen() const {
  std::optional<std::uint64_t> oldest;
  for (const auto& [arrival, entries] : pending_) {
    for (const auto& d : entries) {
      if (!oldest || d.msg.gen_iter < *oldest) oldest = d.msg.gen_iter;
    }
  }
  return oldest;
}

}  // namespace stalesim
