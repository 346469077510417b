#include "stalesim/optim.hpp"

#include <cmath>

namespace stalesim {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

void require(bool ok, const char* message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

void validate(const OptimizerSpec& spec) {
  std::visit(overloaded{
                 [](const Sgd& o) { require(o.lr > 0, "learning rate must be positive"); },
                 [](const Momentum& o) {
                   require(o.lr > 0, "learning rate must be positive");
                   require(o.momentum >= 0 && o.momentum < 1, "momentum must lie in [0, 1)");
                 },
                 [](const Adam& o) {
                   require(o.lr > 0, "learning rate must be positive");
                   require(o.beta1 >= 0 && o.beta1 < 1, "beta1 must lie in [0, 1)");
                   require(o.beta2 >= 0 && o.beta2 < 1, "beta2 must lie in [0, 1)");
                   require(o.eps > 0, "epsilon must be positive");
                 },
                 [](const Adagrad& o) {
                   require(o.lr > 0, "learning rate must be positive");
                   require(o.eps > 0, "epsilon must be positive");
                 },
                 [](const RmsProp& o) {
                   require(o.lr > 0, "learning rate must be positive");
                   require(o.decay >= 0 && o.decay < 1, "decay must lie in [0, 1)");
                   require(o.momentum >= 0 && o.momentum < 1, "momentum must lie in [0, 1)");
                   require(o.eps > 0, "epsilon must be positive");
                 },
             },
             spec);
}

std::string optimizer_name(const OptimizerSpec& spec) {
  return std::visit(overloaded{
                        [](const Sgd&) { return std::string("sgd"); },
                        [](const Momentum&) { return std::string("momentum"); },
                        [](const Adam&) { return std::string("adam"); },
                        [](const Adagrad&) { return std::string("adagrad"); },
                        [](const RmsProp&) { return std::string("rmsprop"); },
                    },
                    spec);
}

double learning_rate(const OptimizerSpec& spec) {
  return std::visit([](const auto& o) { return o.lr; }, spec);
}

OptimizerSpec default_optimizer(const std::string& name) {
  if (name == "sgd") return Sgd{};
  if (name == "momentum") return Momentum{};
  if (name == "adam") return Adam{};
  if (name == "adagrad") return Adagrad{};
  if (name == "rmsprop") return RmsProp{};
  throw ConfigError("unknown optimizer '" + name + "'");
}

Optimizer::Optimizer(OptimizerSpec spec, std::size_t dim) : spec_(spec), dim_(dim) {
  validate(spec_);
  std::visit(overloaded{
                 [](const Sgd&) {},
                 [&](const Momentum&) { first_.assign(dim_, 0.0); },
                 [&](const Adam&) {
                   first_.assign(dim_, 0.0);
                   second_.assign(dim_, 0.0);
                 },
                 [&](const Adagrad&) { second_.assign(dim_, 0.0); },
                 [&](const RmsProp& o) {
                   second_.assign(dim_, 0.0);
                   if (o.momentum > 0) first_.assign(dim_, 0.0);
                 },
             },
             spec_);
}

void Optimizer::set_learning_rate(double lr) {
  if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive and finite");
  std::visit([lr](auto& o) { o.lr = lr; }, spec_);
}

ParamVector Optimizer::apply(std::span<const double> grad) {
  if (grad.size() != dim_) throw std::invalid_argument("gradient dimension mismatch");
  if (!all_finite(grad)) throw NonFiniteError("non-finite gradient passed to optimizer");
  ++step_count_;
  ParamVector delta(dim_);
  const std::size_t n = dim_;
  std::visit(
      overloaded{
          [&](const Sgd& o) {
            for (std::size_t i = 0; i < n; ++i) delta[i] = -o.lr * grad[i];
          },
          [&](const Momentum& o) {
            for (std::size_t i = 0; i < n; ++i) {
              first_[i] = o.momentum * first_[i] + grad[i];
              delta[i] = -o.lr * first_[i];
            }
          },
          [&](const Adam& o) {
            const double t = static_cast<double>(step_count_);
            const double c1 = 1.0 - std::pow(o.beta1, t);
            const double c2 = 1.0 - std::pow(o.beta2, t);
            for (std::size_t i = 0; i < n; ++i) {
              first_[i] = o.beta1 * first_[i] + (1.0 - o.beta1) * grad[i];
              second_[i] = o.beta2 * second_[i] + (1.0 - o.beta2) * grad[i] * grad[i];
              const double m_hat = first_[i] / c1;
              const double v_hat = second_[i] / c2;
              delta[i] = -o.lr * m_hat / (std::sqrt(v_hat) + o.eps);
            }
          },
          [&](const Adagrad& o) {
            for (std::size_t i = 0; i < n; ++i) {
              second_[i] += grad[i] * grad[i];
              delta[i] = -o.lr * grad[i] / (std::sqrt(second_[i]) + o.eps);
            }
          },
          [&](const RmsProp& o) {
            for (std::size_t i = 0; i < n; ++i) {
              second_[i] = o.decay * second_[i] + (1.0 - o.decay) * grad[i] * grad[i];
              const double step = o.lr * grad[i] / std::sqrt(second_[i] + o.eps);
              if (o.momentum > 0) {
                first_[i] = o.momentum * first_[i] + step;
                delta[i] = -first_[i];
              } else {
                delta[i] = -step;
              }
            }
          },
      },
      spec_);
  if (!all_finite(delta)) throw NonFiniteError("optimizer produced a non-finite delta");
  return delta;
}

SparseDelta Optimizer::apply_sparse(const SparseDelta& grad) {
  const auto* sgd = std::get_if<Sgd>(&spec_);
  if (!sgd) throw UnsupportedOptimizerError(optimizer_name(spec_) + " is not supported for sparse updates; use sgd");
  if (!all_finite(grad.value)) throw NonFiniteError("non-finite gradient passed to optimizer");
  ++step_count_;
  SparseDelta delta;
  delta.index = grad.index;
  delta.value.resize(grad.value.size());
  for (std::size_t k = 0; k < grad.value.size(); ++k) delta.value[k] = -sgd->lr * grad.value[k];
  return delta;
}

ParamDelta Optimizer::apply(const ParamDelta& grad) {
  if (const auto* dense = std::get_if<ParamVector>(&grad)) return apply(std::span<const double>(*dense));
  return apply_sparse(std::get<SparseDelta>(grad));
}

}  // namespace stalesim
