#include "stalesim/dnn.hpp"

#include <algorithm>
#include <cmath>

#include "nets_internal.hpp"

namespace stalesim {

std::vector<DenseLayer> net_layers(const NetSpec& spec) {
  std::vector<DenseLayer> layers;
  std::size_t offset = 0;
  int in = spec.input_dim;
  for (int l = 0; l <= spec.depth; ++l) {
    const int out = (l == spec.depth) ? spec.output_dim : spec.width;
    layers.push_back(DenseLayer{offset, in, out});
    offset += layers.back().size();
    in = out;
  }
  return layers;
}

std::size_t param_count(const NetSpec& spec) {
  const auto layers = net_layers(spec);
  return layers.back().offset + layers.back().size();
}

ParamVector init_net(const NetSpec& spec, Rng& rng) {
  ParamVector params(param_count(spec), 0.0);
  for (const auto& layer : net_layers(spec)) detail::glorot_init(params, layer, rng);
  return params;
}

namespace {

using detail::bias;
using detail::gather_columns;
using detail::weights;

void check_spec(const NetSpec& spec, std::size_t params) {
  if (spec.depth < 0 || spec.input_dim <= 0 || spec.output_dim <= 0 || (spec.depth > 0 && spec.width <= 0))
    throw ConfigError("invalid network shape");
  if (params != param_count(spec)) throw std::invalid_argument("parameter vector does not match network shape");
}

// Returns hidden activations (index 0 is the input) and the logits.
std::vector<Eigen::MatrixXd> forward(const NetSpec& spec, std::span<const double> params,
                                     const std::vector<DenseLayer>& layers, Eigen::MatrixXd input) {
  std::vector<Eigen::MatrixXd> acts;
  acts.reserve(layers.size() + 1);
  acts.push_back(std::move(input));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd z = weights(params, layers[l]) * acts.back();
    z.colwise() += bias(params, layers[l]);
    if (static_cast<int>(l) < spec.depth) z = z.cwiseMax(0.0);
    acts.push_back(std::move(z));
  }
  return acts;
}

// Column-wise log-softmax, in place.
void log_softmax(Eigen::MatrixXd& logits) {
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    auto col = logits.col(c);
    const double m = col.maxCoeff();
    const double lse = m + std::log((col.array() - m).exp().sum());
    col.array() -= lse;
  }
}

}  // namespace

LossGrad dnn_forward_backward(const NetSpec& spec, std::span<const double> params, const ClassificationData& data,
                              std::span<const std::size_t> batch) {
  check_spec(spec, params.size());
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const auto layers = net_layers(spec);
  auto acts = forward(spec, params, layers, gather_columns(data.features, batch));
  Eigen::MatrixXd& logp = acts.back();
  log_softmax(logp);

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  LossGrad out;
  double loss = 0.0;
  Eigen::MatrixXd delta = logp.array().exp().matrix();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const int y = data.labels[batch[i]];
    loss -= logp(y, static_cast<Eigen::Index>(i));
    delta(y, static_cast<Eigen::Index>(i)) -= 1.0;
  }
  out.loss = loss * inv_b;
  delta *= inv_b;

  out.grad.assign(params.size(), 0.0);
  for (std::size_t l = layers.size(); l-- > 0;) {
    const Eigen::MatrixXd& input = acts[l];
    detail::weights_mut(out.grad, layers[l]) = Eigen::MatrixXd(delta * input.transpose());
    detail::bias_mut(out.grad, layers[l]) = Eigen::VectorXd(delta.rowwise().sum());
    if (l == 0) break;
    Eigen::MatrixXd back = weights(params, layers[l]).transpose() * delta;
    delta = back.cwiseProduct((input.array() > 0.0).cast<double>().matrix());
  }
  if (!std::isfinite(out.loss) || !all_finite(out.grad)) throw NonFiniteError("network loss or gradient is not finite");
  return out;
}

double dnn_loss(const NetSpec& spec, std::span<const double> params, const ClassificationData& data,
                std::span<const std::size_t> batch) {
  check_spec(spec, params.size());
  const auto layers = net_layers(spec);
  auto acts = forward(spec, params, layers, gather_columns(data.features, batch));
  log_softmax(acts.back());
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) loss -= acts.back()(data.labels[batch[i]], static_cast<Eigen::Index>(i));
  return loss / static_cast<double>(batch.size());
}

double dnn_accuracy(const NetSpec& spec, std::span<const double> params, const ClassificationData& data) {
  check_spec(spec, params.size());
  if (data.size() == 0) return 0.0;
  const auto layers = net_layers(spec);
  constexpr Eigen::Index kChunk = 1024;
  std::size_t correct = 0;
  const Eigen::Index n = data.features.cols();
  for (Eigen::Index start = 0; start < n; start += kChunk) {
    const Eigen::Index len = std::min(kChunk, n - start);
    auto acts = forward(spec, params, layers, data.features.middleCols(start, len));
    const Eigen::MatrixXd& logits = acts.back();
    for (Eigen::Index c = 0; c < len; ++c) {
      Eigen::Index best = 0;
      for (Eigen::Index k = 1; k < logits.rows(); ++k) {
        if (logits(k, c) > logits(best, c)) best = k;
      }
      if (best == data.labels[static_cast<std::size_t>(start + c)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

DnnWorkload::DnnWorkload(NetSpec spec, std::shared_ptr<const ClassificationSplit> data)
    : spec_(spec), data_(std::move(data)) {
  spec_.input_dim = data_->train.input_dim();
  spec_.output_dim = data_->train.num_classes;
  if (spec_.depth < 0 || spec_.depth > 6) throw ConfigError("network depth must lie in 0..6");
  dim_ = param_count(spec_);
}

RawUpdate DnnWorkload::compute_update(const ParamVector& params, std::span<const std::size_t> batch, WorkerLocal*,
                                      Rng&) const {
  LossGrad lg = dnn_forward_backward(spec_, params, data_->train, batch);
  RawUpdate u;
  u.value = std::move(lg.grad);
  u.batch_loss = lg.loss;
  return u;
}

double DnnWorkload::evaluate(const ParamVector& params, std::span<const WorkerLocal* const>) const {
  return dnn_accuracy(spec_, params, data_->test);
}

double DnnWorkload::objective(const ParamVector& params, std::span<const std::size_t> units, ParamVector* grad) const {
  if (grad) {
    LossGrad lg = dnn_forward_backward(spec_, params, data_->train, units);
    *grad = std::move(lg.grad);
    return lg.loss;
  }
  return dnn_loss(spec_, params, data_->train, units);
}

}  // namespace stalesim
