#pragma once

#include <memory>
#include <span>
#include <vector>

#include "stalesim/datasets.hpp"
#include "stalesim/workload.hpp"

namespace stalesim {

// Fully connected ReLU network with a softmax output. depth 0 is multi-class
// logistic regression.
struct NetSpec {
  int depth = 0;
  int width = 256;
  int input_dim = 0;
  int output_dim = 0;
};

// Location of one affine layer inside a flat parameter vector: the weight
// matrix (out x in, column-major) followed by the bias.
struct DenseLayer {
  std::size_t offset = 0;
  int in = 0;
  int out = 0;

  std::size_t size() const { return static_cast<std::size_t>(in) * out + out; }
};

std::vector<DenseLayer> net_layers(const NetSpec& spec);
std::size_t param_count(const NetSpec& spec);
// Uniform Glorot initialization for weights, zero biases.
ParamVector init_net(const NetSpec& spec, Rng& rng);

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

// Mean softmax cross-entropy over `batch` and its gradient.
LossGrad dnn_forward_backward(const NetSpec& spec, std::span<const double> params, const ClassificationData& data,
                              std::span<const std::size_t> batch);
double dnn_loss(const NetSpec& spec, std::span<const double> params, const ClassificationData& data,
                std::span<const std::size_t> batch);
// Argmax accuracy with ties going to the lowest class index.
double dnn_accuracy(const NetSpec& spec, std::span<const double> params, const ClassificationData& data);

class DnnWorkload final : public Workload {
 public:
  DnnWorkload(NetSpec spec, std::shared_ptr<const ClassificationSplit> data);

  std::string kind() const override { return spec_.depth == 0 ? "mlr" : "dnn"; }
  std::size_t dim() const override { return dim_; }
  std::size_t num_units() const override { return data_->train.size(); }
  std::size_t default_batch_size(int) const override { return 32; }

  ParamVector init_params(Rng& rng) const override { return init_net(spec_, rng); }
  RawUpdate compute_update(const ParamVector& params, std::span<const std::size_t> batch, WorkerLocal* local,
                           Rng& rng) const override;

  std::string metric_name() const override { return "accuracy"; }
  Direction metric_direction() const override { return Direction::AtLeast; }
  double evaluate(const ParamVector& params, std::span<const WorkerLocal* const> locals) const override;

  bool has_objective() const override { return true; }
  double objective(const ParamVector& params, std::span<const std::size_t> units, ParamVector* grad) const override;

  const NetSpec& spec() const { return spec_; }
  const ClassificationSplit& data() const { return *data_; }

 private:
  NetSpec spec_;
  std::shared_ptr<const ClassificationSplit> data_;
  std::size_t dim_;
};

}  // namespace stalesim
