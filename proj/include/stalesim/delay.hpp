#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "stalesim/common.hpp"

namespace stalesim {

// Each update waits r ~ Categorical(0..s-1) extra iterations per destination.
// s = 0 and s = 1 both mean "no extra delay".
struct UniformBounded {
  int max_staleness = 0;
};

// Per iteration, `straggler_count` workers are picked at random. Every source
// draws one geometric delay (support 0,1,2,...) shared by all destinations,
// with success probability depending on whether it straggles this iteration.
struct GeometricStraggler {
  double straggler_success = 0.1;
  double nonstraggler_success = 1.0;
  int straggler_count = 1;
  int cap = 100;
};

using DelaySpec = std::variant<UniformBounded, GeometricStraggler>;

void validate(const DelaySpec& spec, int workers);
std::string describe(const DelaySpec& spec);

// Largest extra delay the spec can produce.
int max_extra_delay(const DelaySpec& spec);

int sample_delay_uniform(int max_staleness, Rng& rng);

class DelayMatrix {
 public:
  explicit DelayMatrix(int workers) : workers_(workers), data_(static_cast<std::size_t>(workers) * workers, 0) {}

  int workers() const { return workers_; }
  int& at(int source, int destination) { return data_[static_cast<std::size_t>(source) * workers_ + destination]; }
  int at(int source, int destination) const { return data_[static_cast<std::size_t>(source) * workers_ + destination]; }
  std::span<const int> row(int source) const {
    return {data_.data() + static_cast<std::size_t>(source) * workers_, static_cast<std::size_t>(workers_)};
  }

  bool operator==(const DelayMatrix&) const = default;

 private:
  int workers_;
  std::vector<int> data_;
};

// Rows are sources, columns destinations (self included).
DelayMatrix sample_iteration_delays(const DelaySpec& spec, int workers, Rng& rng);

double geometric_mean(double success);

struct MeanMatch {
  double nonstraggler_success = 1.0;
  std::optional<std::string> warning;
};

// Picks the non-straggler success probability so that the mixture mean equals
// the uniform model's mean extra delay (s-1)/2.
MeanMatch match_mean_geometric(int uniform_staleness, double straggler_success, int straggler_count, int workers);

struct UpdateMsg {
  int source = 0;
  std::uint64_t gen_iter = 0;
  std::shared_ptr<const ParamDelta> delta;
};

struct Delivery {
  int destination = 0;
  std::uint64_t arrival_iter = 0;
  UpdateMsg msg;
};

class TransitQueue {
 public:
  // Enqueues `msg` for every destination p at gen_iter + 1 + delays[p].
  void schedule(const UpdateMsg& msg, std::span<const int> delays);

  // Removes and returns everything due at or before `iter`, ordered by
  // (gen_iter, source, destination).
  std::vector<Delivery> drain(std::uint64_t iter);

  std::size_t pending() const { return pending_count_; }
  bool empty() const { return pending_count_ == 0; }
  std::optional<std::uint64_t> next_arrival() const;
  std::optional<std::uint64_t> oldest_pending_gen() const;

 private:
  std::map<std::uint64_t, std::vector<Delivery>> pending_;
  std::size_t pending_count_ = 0;
};

}  // namespace stalesim
