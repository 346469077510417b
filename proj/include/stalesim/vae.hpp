#pragma once

#include <memory>
#include <span>

#include <Eigen/Dense>

#include "stalesim/datasets.hpp"
#include "stalesim/dnn.hpp"
#include "stalesim/workload.hpp"

namespace stalesim {

// Encoder: `depth` ReLU layers of `width`, then linear heads for the latent
// mean and log-variance. Decoder: `depth` ReLU layers, then a logistic output
// giving the reconstruction mean. Prior N(0, I); unit-variance Gaussian
// likelihood.
struct VaeSpec {
  int depth = 1;
  int width = 256;
  int input_dim = 0;
  int latent_dim = 32;
};

struct VaeLayout {
  std::vector<DenseLayer> encoder;
  DenseLayer mean_head;
  DenseLayer logvar_head;
  std::vector<DenseLayer> decoder;
  DenseLayer output;
  std::size_t size = 0;
};

VaeLayout vae_layout(const VaeSpec& spec);
ParamVector init_vae(const VaeSpec& spec, Rng& rng);

// KL(N(mean, exp(logvar)) || N(0, I)) per column.
Eigen::VectorXd gaussian_kl(const Eigen::MatrixXd& mean, const Eigen::MatrixXd& logvar);

// Negative ELBO averaged over the batch (reconstruction term omits the
// constant 0.5 * D * log(2 pi)), with the reparameterization noise given
// explicitly: `noise` is latent_dim x batch.
LossGrad vae_loss_and_grad(const VaeSpec& spec, std::span<const double> params, const Eigen::MatrixXd& inputs,
                           std::span<const std::size_t> batch, const Eigen::MatrixXd& noise);
LossGrad vae_loss_and_grad(const VaeSpec& spec, std::span<const double> params, const Eigen::MatrixXd& inputs,
                           std::span<const std::size_t> batch, Rng& rng);
double vae_loss(const VaeSpec& spec, std::span<const double> params, const Eigen::MatrixXd& inputs,
                std::span<const std::size_t> batch, const Eigen::MatrixXd& noise);

Eigen::MatrixXd standard_normal(int rows, std::size_t cols, Rng& rng);

class VaeWorkload final : public Workload {
 public:
  VaeWorkload(VaeSpec spec, std::shared_ptr<const ClassificationSplit> data);

  std::string kind() const override { return "vae"; }
  std::size_t dim() const override { return layout_.size; }
  std::size_t num_units() const override { return data_->train.size(); }
  std::size_t default_batch_size(int) const override { return 32; }

  ParamVector init_params(Rng& rng) const override { return init_vae(spec_, rng); }
  RawUpdate compute_update(const ParamVector& params, std::span<const std::size_t> batch, WorkerLocal* local,
                           Rng& rng) const override;

  // Negative ELBO on the test split, with noise from a fixed-seed stream.
  std::string metric_name() const override { return "test_loss"; }
  Direction metric_direction() const override { return Direction::AtMost; }
  double evaluate(const ParamVector& params, std::span<const WorkerLocal* const> locals) const override;

  bool has_objective() const override { return true; }
  double objective(const ParamVector& params, std::span<const std::size_t> units, ParamVector* grad) const override;

  const VaeSpec& spec() const { return spec_; }

 private:
  VaeSpec spec_;
  std::shared_ptr<const ClassificationSplit> data_;
  VaeLayout layout_;
};

}  // namespace stalesim
