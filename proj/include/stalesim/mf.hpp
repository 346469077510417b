#pragma once

#include <memory>
#include <span>

#include "stalesim/datasets.hpp"
#include "stalesim/workload.hpp"

namespace stalesim {

// L (rows x rank) followed by R (cols x rank), both row-major, in one vector.
struct MfSpec {
  int rows = 0;
  int cols = 0;
  int rank = 5;
  double lambda = 1e-4;

  std::size_t dim() const { return (static_cast<std::size_t>(rows) + cols) * rank; }
  std::size_t left(int i, int k) const { return static_cast<std::size_t>(i) * rank + k; }
  std::size_t right(int j, int k) const { return (static_cast<std::size_t>(rows) + j) * rank + k; }
};

void validate(const MfSpec& spec);

// (1/|obs|) [ sum (D_ij - L_i . R_j)^2 + lambda (||L||_F^2 + ||R||_F^2) ]
double mf_loss(const MfSpec& spec, std::span<const double> params, const RatingMatrix& data);

// Stochastic gradient of mf_loss from the ratings at `batch`. Each
// occurrence of row i contributes 2 lambda L_i / n_i (n_i = observations in
// row i) to the regularizer part, so the full batch gives the exact gradient.
SparseDelta mf_gradient(const MfSpec& spec, std::span<const double> params, const RatingMatrix& data,
                        std::span<const std::size_t> batch);

// Loss matching mf_gradient's per-occurrence regularizer on a subset.
double mf_subset_loss(const MfSpec& spec, std::span<const double> params, const RatingMatrix& data,
                      std::span<const std::size_t> subset);

class MfWorkload final : public Workload {
 public:
  MfWorkload(MfSpec spec, std::shared_ptr<const RatingMatrix> data);

  std::string kind() const override { return "mf"; }
  std::size_t dim() const override { return spec_.dim(); }
  std::size_t num_units() const override { return data_->entries.size(); }
  bool sparse_updates() const override { return true; }
  // 2.5% of the observations, i.e. 25000 for MovieLens 1M.
  std::size_t default_batch_size(int) const override;

  // Factors drawn from N(0, 0.1^2).
  ParamVector init_params(Rng& rng) const override;
  RawUpdate compute_update(const ParamVector& params, std::span<const std::size_t> batch, WorkerLocal* local,
                           Rng& rng) const override;

  std::string metric_name() const override { return "train_loss"; }
  Direction metric_direction() const override { return Direction::AtMost; }
  double evaluate(const ParamVector& params, std::span<const WorkerLocal* const> locals) const override;

  bool has_objective() const override { return true; }
  double objective(const ParamVector& params, std::span<const std::size_t> units, ParamVector* grad) const override;

  const MfSpec& spec() const { return spec_; }

 private:
  MfSpec spec_;
  std::shared_ptr<const RatingMatrix> data_;
};

}  // namespace stalesim
