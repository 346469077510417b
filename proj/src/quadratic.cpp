#include "stalesim/quadratic.hpp"

#include <cmath>
#include <limits>

namespace stalesim {

QuadraticWorkload::QuadraticWorkload(QuadraticSpec spec, std::uint64_t seed) : spec_(spec) {
  if (spec_.dim < 1) throw ConfigError("quadratic dimension must be positive");
  if (spec_.lambda_min < 0 || spec_.lambda_max < spec_.lambda_min)
    throw ConfigError("need 0 <= lambda_min <= lambda_max");
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd eig(spec_.dim);
  for (int i = 0; i < spec_.dim; ++i) {
    const double t = spec_.dim == 1 ? 1.0 : static_cast<double>(i) / (spec_.dim - 1);
    eig(i) = spec_.lambda_min + t * (spec_.lambda_max - spec_.lambda_min);
  }
  if (spec_.rotate) {
    Eigen::MatrixXd g(spec_.dim, spec_.dim);
    for (int c = 0; c < spec_.dim; ++c) {
      for (int r = 0; r < spec_.dim; ++r) g(r, c) = n(rng);
    }
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    a_ = q * eig.asDiagonal() * q.transpose();
    a_ = 0.5 * (a_ + a_.transpose());
  } else {
    a_ = eig.asDiagonal();
  }
  b_.resize(spec_.dim);
  for (int i = 0; i < spec_.dim; ++i) b_(i) = spec_.linear * n(rng);
}

ParamVector QuadraticWorkload::init_params(Rng& rng) const {
  std::normal_distribution<double> n(0.0, 1.0);
  ParamVector x(dim());
  for (double& v : x) v = n(rng);
  return x;
}

RawUpdate QuadraticWorkload::compute_update(const ParamVector& params, std::span<const std::size_t>, WorkerLocal*,
                                            Rng&) const {
  ParamVector g;
  RawUpdate u;
  u.batch_loss = objective(params, {}, &g);
  u.value = std::move(g);
  return u;
}

double QuadraticWorkload::evaluate(const ParamVector& params, std::span<const WorkerLocal* const>) const {
  return objective(params, {}, nullptr);
}

double QuadraticWorkload::objective(const ParamVector& params, std::span<const std::size_t>, ParamVector* grad) const {
  const Eigen::Map<const Eigen::VectorXd> x(params.data(), spec_.dim);
  const Eigen::VectorXd ax = a_ * x;
  const double f = 0.5 * x.dot(ax) + b_.dot(x);
  if (grad) {
    grad->resize(dim());
    Eigen::Map<Eigen::VectorXd>(grad->data(), spec_.dim) = ax + b_;
  }
  if (!std::isfinite(f)) throw NonFiniteError("quadratic objective is not finite");
  return f;
}

double QuadraticWorkload::infimum() const {
  if (spec_.linear == 0.0) return 0.0;
  if (spec_.lambda_min <= 0.0) return -std::numeric_limits<double>::infinity();
  return -0.5 * b_.dot(a_.ldlt().solve(b_));
}

}  // namespace stalesim
