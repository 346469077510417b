#include "stalesim/mf.hpp"

#include <cmath>
#include <map>

namespace stalesim {

void validate(const MfSpec& spec) {
  if (spec.rows <= 0 || spec.cols <= 0) throw ConfigError("matrix must be non-empty");
  if (spec.rank < 1 || spec.rank > std::min(spec.rows, spec.cols)) throw ConfigError("rank must lie in 1..min(M,N)");
  if (spec.lambda < 0) throw ConfigError("lambda must be non-negative");
}

namespace {

double residual(const MfSpec& s, std::span<const double> p, const Rating& e) {
  double dot = 0.0;
  for (int k = 0; k < s.rank; ++k) dot += p[s.left(static_cast<int>(e.row), k)] * p[s.right(static_cast<int>(e.col), k)];
  return e.value - dot;
}

void check(const MfSpec& s, std::span<const double> p) {
  if (p.size() != s.dim()) throw std::invalid_argument("parameter vector does not match factor shapes");
}

}  // namespace

double mf_loss(const MfSpec& spec, std::span<const double> params, const RatingMatrix& data) {
  check(spec, params);
  if (data.entries.empty()) throw std::invalid_argument("no observations");
  double sse = 0.0;
  for (const auto& e : data.entries) {
    const double r = residual(spec, params, e);
    sse += r * r;
  }
  double norm = 0.0;
  for (double v : params) norm += v * v;
  const double loss = (sse + spec.lambda * norm) / static_cast<double>(data.entries.size());
  if (!std::isfinite(loss)) throw NonFiniteError("MF loss is not finite");
  return loss;
}

SparseDelta mf_gradient(const MfSpec& spec, std::span<const double> params, const RatingMatrix& data,
                        std::span<const std::size_t> batch) {
  check(spec, params);
  std::map<std::size_t, double> g;
  if (batch.empty()) return {};
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (std::size_t idx : batch) {
    const Rating& e = data.entries[idx];
    const int i = static_cast<int>(e.row);
    const int j = static_cast<int>(e.col);
    const double err = residual(spec, params, e);
    const double reg_l = 2.0 * spec.lambda / data.row_counts[e.row];
    const double reg_r = 2.0 * spec.lambda / data.col_counts[e.col];
    for (int k = 0; k < spec.rank; ++k) {
      const double l = params[spec.left(i, k)];
      const double r = params[spec.right(j, k)];
      g[spec.left(i, k)] += inv_b * (-2.0 * err * r + reg_l * l);
      g[spec.right(j, k)] += inv_b * (-2.0 * err * l + reg_r * r);
    }
  }
  SparseDelta out = SparseDelta::from_map(g);
  if (!all_finite(out.value)) throw NonFiniteError("MF gradient is not finite");
  return out;
}

double mf_subset_loss(const MfSpec& spec, std::span<const double> params, const RatingMatrix& data,
                      std::span<const std::size_t> subset) {
  check(spec, params);
  if (subset.empty()) throw std::invalid_argument("empty subset");
  double total = 0.0;
  for (std::size_t idx : subset) {
    const Rating& e = data.entries[idx];
    const double r = residual(spec, params, e);
    double nl = 0.0;
    double nr = 0.0;
    for (int k = 0; k < spec.rank; ++k) {
      const double l = params[spec.left(static_cast<int>(e.row), k)];
      const double rr = params[spec.right(static_cast<int>(e.col), k)];
      nl += l * l;
      nr += rr * rr;
    }
    total += r * r + spec.lambda * (nl / data.row_counts[e.row] + nr / data.col_counts[e.col]);
  }
  return total / static_cast<double>(subset.size());
}

MfWorkload::MfWorkload(MfSpec spec, std::shared_ptr<const RatingMatrix> data) : spec_(spec), data_(std::move(data)) {
  spec_.rows = data_->rows;
  spec_.cols = data_->cols;
  validate(spec_);
  if (data_->entries.empty()) throw ConfigError("MF needs at least one observation");
}

std::size_t MfWorkload::default_batch_size(int) const {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.025 * static_cast<double>(num_units()))));
}

ParamVector MfWorkload::init_params(Rng& rng) const {
  std::normal_distribution<double> n(0.0, 0.1);
  ParamVector p(spec_.dim());
  for (double& v : p) v = n(rng);
  return p;
}

RawUpdate MfWorkload::compute_update(const ParamVector& params, std::span<const std::size_t> batch, WorkerLocal*,
                                     Rng&) const {
  RawUpdate u;
  u.value = mf_gradient(spec_, params, *data_, batch);
  return u;
}

double MfWorkload::evaluate(const ParamVector& params, std::span<const WorkerLocal* const>) const {
  return mf_loss(spec_, params, *data_);
}

double MfWorkload::objective(const ParamVector& params, std::span<const std::size_t> units, ParamVector* grad) const {
  if (grad) *grad = densify(mf_gradient(spec_, params, *data_, units), spec_.dim());
  return mf_subset_loss(spec_, params, *data_, units);
}

}  // namespace stalesim
