#include "stalesim/vae.hpp"

#include <cmath>
#include <numeric>

#include "nets_internal.hpp"

namespace stalesim {

using detail::bias;
using detail::weights;

VaeLayout vae_layout(const VaeSpec& spec) {
  if (spec.depth < 1 || spec.depth > 3) throw ConfigError("VAE depth must lie in 1..3");
  if (spec.input_dim <= 0 || spec.latent_dim <= 0 || spec.width <= 0) throw ConfigError("invalid VAE shape");
  VaeLayout L;
  std::size_t offset = 0;
  auto add = [&](int in, int out) {
    DenseLayer l{offset, in, out};
    offset += l.size();
    return l;
  };
  int in = spec.input_dim;
  for (int i = 0; i < spec.depth; ++i) {
    L.encoder.push_back(add(in, spec.width));
    in = spec.width;
  }
  L.mean_head = add(in, spec.latent_dim);
  L.logvar_head = add(in, spec.latent_dim);
  in = spec.latent_dim;
  for (int i = 0; i < spec.depth; ++i) {
    L.decoder.push_back(add(in, spec.width));
    in = spec.width;
  }
  L.output = add(in, spec.input_dim);
  L.size = offset;
  return L;
}

ParamVector init_vae(const VaeSpec& spec, Rng& rng) {
  const VaeLayout L = vae_layout(spec);
  ParamVector params(L.size, 0.0);
  for (const auto& l : L.encoder) detail::glorot_init(params, l, rng);
  detail::glorot_init(params, L.mean_head, rng);
  detail::glorot_init(params, L.logvar_head, rng);
  for (const auto& l : L.decoder) detail::glorot_init(params, l, rng);
  detail::glorot_init(params, L.output, rng);
  return params;
}

Eigen::VectorXd gaussian_kl(const Eigen::MatrixXd& mean, const Eigen::MatrixXd& logvar) {
  return (0.5 * (mean.array().square() + logvar.array().exp() - logvar.array() - 1.0)).colwise().sum().transpose();
}

Eigen::MatrixXd standard_normal(int rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd out(rows, static_cast<Eigen::Index>(cols));
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    for (Eigen::Index r = 0; r < out.rows(); ++r) out(r, c) = n(rng);
  }
  return out;
}

namespace {

Eigen::MatrixXd affine(std::span<const double> params, const DenseLayer& l, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd z = weights(params, l) * x;
  z.colwise() += bias(params, l);
  return z;
}

struct Pass {
  std::vector<Eigen::MatrixXd> enc;  // enc[0] is the input
  Eigen::MatrixXd mean, logvar, sigma, z;
  std::vector<Eigen::MatrixXd> dec;  // dec[0] is z
  Eigen::MatrixXd recon;
  double loss = 0.0;
};

Pass run_forward(const VaeLayout& L, std::span<const double> params, Eigen::MatrixXd x, const Eigen::MatrixXd& noise) {
  Pass p;
  p.enc.push_back(std::move(x));
  for (const auto& l : L.encoder) p.enc.push_back(affine(params, l, p.enc.back()).cwiseMax(0.0));
  p.mean = affine(params, L.mean_head, p.enc.back());
  p.logvar = affine(params, L.logvar_head, p.enc.back());
  p.sigma = (0.5 * p.logvar.array()).exp().matrix();
  p.z = p.mean + p.sigma.cwiseProduct(noise);
  p.dec.push_back(p.z);
  for (const auto& l : L.decoder) p.dec.push_back(affine(params, l, p.dec.back()).cwiseMax(0.0));
  p.recon = (1.0 / (1.0 + (-affine(params, L.output, p.dec.back()).array()).exp())).matrix();

  const double b = static_cast<double>(p.enc[0].cols());
  const double recon_term = 0.5 * (p.enc[0] - p.recon).squaredNorm();
  const double kl_term = gaussian_kl(p.mean, p.logvar).sum();
  p.loss = (recon_term + kl_term) / b;
  return p;
}

void check_shapes(const VaeLayout& L, std::span<const double> params, std::size_t batch, const Eigen::MatrixXd& noise,
                  int latent) {
  if (params.size() != L.size) throw std::invalid_argument("parameter vector does not match VAE shape");
  if (batch == 0) throw std::invalid_argument("empty batch");
  if (noise.rows() != latent || static_cast<std::size_t>(noise.cols()) != batch)
    throw std::invalid_argument("noise must be latent_dim x batch");
}

}  // namespace

double vae_loss(const VaeSpec& spec, std::span<const double> params, const Eigen::MatrixXd& inputs,
                std::span<const std::size_t> batch, const Eigen::MatrixXd& noise) {
  const VaeLayout L = vae_layout(spec);
  check_shapes(L, params, batch.size(), noise, spec.latent_dim);
  return run_forward(L, params, detail::gather_columns(inputs, batch), noise).loss;
}

LossGrad vae_loss_and_grad(const VaeSpec& spec, std::span<const double> params, const Eigen::MatrixXd& inputs,
                           std::span<const std::size_t> batch, const Eigen::MatrixXd& noise) {
  const VaeLayout L = vae_layout(spec);
  check_shapes(L, params, batch.size(), noise, spec.latent_dim);
  Pass p = run_forward(L, params, detail::gather_columns(inputs, batch), noise);
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  LossGrad out;
  out.loss = p.loss;
  out.grad.assign(params.size(), 0.0);
  auto store = [&](const DenseLayer& l, const Eigen::MatrixXd& delta, const Eigen::MatrixXd& input) {
    detail::weights_mut(out.grad, l) = Eigen::MatrixXd(delta * input.transpose());
    detail::bias_mut(out.grad, l) = Eigen::VectorXd(delta.rowwise().sum());
  };

  // Output layer: d/do of 0.5 (x - y)^2 with y = logistic(o).
  Eigen::MatrixXd delta =
      ((p.recon - p.enc[0]).array() * p.recon.array() * (1.0 - p.recon.array())).matrix() * inv_b;
  store(L.output, delta, p.dec.back());
  Eigen::MatrixXd grad_in = weights(params, L.output).transpose() * delta;
  for (std::size_t i = L.decoder.size(); i-- > 0;) {
    delta = grad_in.cwiseProduct((p.dec[i + 1].array() > 0.0).cast<double>().matrix());
    store(L.decoder[i], delta, p.dec[i]);
    grad_in = weights(params, L.decoder[i]).transpose() * delta;
  }
  // grad_in is now dLoss/dz (reconstruction path only).
  const Eigen::MatrixXd d_mean = grad_in + p.mean * inv_b;
  const Eigen::MatrixXd d_logvar =
      (grad_in.array() * noise.array() * 0.5 * p.sigma.array() + 0.5 * (p.logvar.array().exp() - 1.0) * inv_b)
          .matrix();
  store(L.mean_head, d_mean, p.enc.back());
  store(L.logvar_head, d_logvar, p.enc.back());
  grad_in = weights(params, L.mean_head).transpose() * d_mean + weights(params, L.logvar_head).transpose() * d_logvar;
  for (std::size_t i = L.encoder.size(); i-- > 0;) {
    delta = grad_in.cwiseProduct((p.enc[i + 1].array() > 0.0).cast<double>().matrix());
    store(L.encoder[i], delta, p.enc[i]);
    if (i > 0) grad_in = weights(params, L.encoder[i]).transpose() * delta;
  }
  if (!std::isfinite(out.loss) || !all_finite(out.grad)) throw NonFiniteError("VAE loss or gradient is not finite");
  return out;
}

LossGrad vae_loss_and_grad(const VaeSpec& spec, std::span<const double> params, const Eigen::MatrixXd& inputs,
                           std::span<const std::size_t> batch, Rng& rng) {
  return vae_loss_and_grad(spec, params, inputs, batch, standard_normal(spec.latent_dim, batch.size(), rng));
}

VaeWorkload::VaeWorkload(VaeSpec spec, std::shared_ptr<const ClassificationSplit> data)
    : spec_(spec), data_(std::move(data)) {
  spec_.input_dim = data_->train.input_dim();
  layout_ = vae_layout(spec_);
}

RawUpdate VaeWorkload::compute_update(const ParamVector& params, std::span<const std::size_t> batch, WorkerLocal*,
                                      Rng& rng) const {
  LossGrad lg = vae_loss_and_grad(spec_, params, data_->train.features, batch, rng);
  RawUpdate u;
  u.value = std::move(lg.grad);
  u.batch_loss = lg.loss;
  return u;
}

double VaeWorkload::evaluate(const ParamVector& params, std::span<const WorkerLocal* const>) const {
  const std::size_t n = data_->test.size();
  if (n == 0) return 0.0;
  Rng rng(0x5eed0fe7a1ULL);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const double loss = vae_loss(spec_, params, data_->test.features, idx, standard_normal(spec_.latent_dim, n, rng));
  if (!std::isfinite(loss)) throw NonFiniteError("VAE test loss is not finite");
  return loss;
}

double VaeWorkload::objective(const ParamVector& params, std::span<const std::size_t> units, ParamVector* grad) const {
  Rng rng(0x9e0be5eedULL);
  const Eigen::MatrixXd noise = standard_normal(spec_.latent_dim, units.size(), rng);
  if (grad) {
    LossGrad lg = vae_loss_and_grad(spec_, params, data_->train.features, units, noise);
    *grad = std::move(lg.grad);
    return lg.loss;
  }
  return vae_loss(spec_, params, data_->train.features, units, noise);
}

}  // namespace stalesim
