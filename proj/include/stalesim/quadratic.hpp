#pragma once

#include <Eigen/Dense>

#include "stalesim/workload.hpp"

namespace stalesim {

// f(x) = 0.5 x^T A x + b^T x with A symmetric PSD. A single full-batch unit,
// so stochastic gradients have zero variance.
struct QuadraticSpec {
  int dim = 20;
  double lambda_min = 0.1;
  double lambda_max = 1.0;
  // Scale of the linear term b ~ N(0, I) * linear.
  double linear = 0.0;
  // Rotate the eigenbasis randomly; otherwise A is diagonal.
  bool rotate = true;
};

class QuadraticWorkload final : public Workload {
 public:
  QuadraticWorkload(QuadraticSpec spec, std::uint64_t seed);

  std::string kind() const override { return "quadratic"; }
  std::size_t dim() const override { return static_cast<std::size_t>(spec_.dim); }
  // Every gradient is full-batch; units only exist so that any worker count
  // gets a non-empty shard.
  std::size_t num_units() const override { return kUnits; }
  std::size_t default_batch_size(int) const override { return 1; }

  // x0 ~ N(0, I).
  ParamVector init_params(Rng& rng) const override;
  RawUpdate compute_update(const ParamVector& params, std::span<const std::size_t> batch, WorkerLocal* local,
                           Rng& rng) const override;

  std::string metric_name() const override { return "objective"; }
  Direction metric_direction() const override { return Direction::AtMost; }
  double evaluate(const ParamVector& params, std::span<const WorkerLocal* const> locals) const override;

  bool has_objective() const override { return true; }
  double objective(const ParamVector& params, std::span<const std::size_t> units, ParamVector* grad) const override;

  // Largest eigenvalue of A: the gradient's Lipschitz constant.
  double lipschitz() const { return spec_.lambda_max; }
  // Infimum of f (minus infinity if unbounded below).
  double infimum() const;
  const Eigen::MatrixXd& hessian() const { return a_; }

 private:
  static constexpr std::size_t kUnits = 1024;
  QuadraticSpec spec_;
  Eigen::MatrixXd a_;
  Eigen::VectorXd b_;
};

}  // namespace stalesim
