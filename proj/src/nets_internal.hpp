#pragma once

#include <cmath>
#include <span>

#include <Eigen/Dense>

#include "stalesim/dnn.hpp"

namespace stalesim::detail {

using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
using MatMap = Eigen::Map<Eigen::MatrixXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

inline Eigen::MatrixXd weights(std::span<const double> params, const DenseLayer& l) {
  return ConstMatMap(params.data() + l.offset, l.out, l.in);
}
inline Eigen::VectorXd bias(std::span<const double> params, const DenseLayer& l) {
  return ConstVecMap(params.data() + l.offset + static_cast<std::size_t>(l.in) * l.out, l.out);
}
inline MatMap weights_mut(std::span<double> params, const DenseLayer& l) {
  return MatMap(params.data() + l.offset, l.out, l.in);
}
inline VecMap bias_mut(std::span<double> params, const DenseLayer& l) {
  return VecMap(params.data() + l.offset + static_cast<std::size_t>(l.in) * l.out, l.out);
}

inline void glorot_init(std::span<double> params, const DenseLayer& l, Rng& rng) {
  const double limit = std::sqrt(6.0 / (l.in + l.out));
  std::uniform_real_distribution<double> u(-limit, limit);
  const std::size_t n = static_cast<std::size_t>(l.in) * l.out;
  for (std::size_t i = 0; i < n; ++i) params[l.offset + i] = u(rng);
}

inline Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& m, std::span<const std::size_t> idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = m.col(static_cast<Eigen::Index>(idx[i]));
  return out;
}

}  // namespace stalesim::detail
