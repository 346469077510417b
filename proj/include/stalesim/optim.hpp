#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>

#include "stalesim/common.hpp"

namespace stalesim {

struct Sgd {
  double lr = 0.01;
};

struct Momentum {
  double lr = 0.01;
  double momentum = 0.9;
};

struct Adam {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct Adagrad {
  double lr = 0.01;
  double eps = 1e-8;
};

struct RmsProp {
  double lr = 0.01;
  double decay = 0.9;
  double momentum = 0.0;
  double eps = 1e-10;
};

using OptimizerSpec = std::variant<Sgd, Momentum, Adam, Adagrad, RmsProp>;

void validate(const OptimizerSpec& spec);
std::string optimizer_name(const OptimizerSpec& spec);
double learning_rate(const OptimizerSpec& spec);
// Table defaults for the named algorithm ("sgd", "momentum", "adam", "adagrad", "rmsprop").
OptimizerSpec default_optimizer(const std::string& name);

// Per-worker optimizer. Turns a raw gradient into the additive delta that is
// broadcast to every cache.
class Optimizer {
 public:
  Optimizer(OptimizerSpec spec, std::size_t dim);

  ParamVector apply(std::span<const double> grad);
  ParamVector apply(const ParamVector& grad) { return apply(std::span<const double>(grad)); }
  SparseDelta apply_sparse(const SparseDelta& grad);
  ParamDelta apply(const ParamDelta& grad);

  // Overrides the learning rate for subsequent calls (stepsize schedules).
  void set_learning_rate(double lr);

  const OptimizerSpec& spec() const { return spec_; }
  std::uint64_t step_count() const { return step_count_; }
  const ParamVector& first_moment() const { return first_; }
  const ParamVector& second_moment() const { return second_; }

 private:
  OptimizerSpec spec_;
  std::size_t dim_;
  std::uint64_t step_count_ = 0;
  // Momentum velocity / Adam m / RMSProp momentum buffer.
  ParamVector first_;
  // Adam v / Adagrad accumulator / RMSProp mean square.
  ParamVector second_;
};

}  // namespace stalesim
