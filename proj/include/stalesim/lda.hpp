#pragma once

#include <memory>
#include <span>
#include <vector>

#include "stalesim/datasets.hpp"
#include "stalesim/workload.hpp"

namespace stalesim {

struct LdaSpec {
  int topics = 10;
  double alpha = 0.1;
  double beta = 0.1;
};

// Shared counts layout: word-topic counts phi[w * K + k] followed by the
// topic totals phi_tilde[k] at offset W * K.
struct LdaLayout {
  int vocab = 0;
  int topics = 0;

  std::size_t word_topic(std::size_t w, int k) const { return w * static_cast<std::size_t>(topics) + k; }
  std::size_t topic_total(int k) const { return static_cast<std::size_t>(vocab) * topics + k; }
  std::size_t dim() const { return (static_cast<std::size_t>(vocab) + 1) * topics; }
};

// Topic assignments and document-topic counts for one worker's documents.
struct LdaLocal final : WorkerLocal {
  std::vector<std::size_t> doc_ids;
  // Global document id -> position in doc_ids, or -1.
  std::vector<int> slot;
  std::vector<std::vector<int>> z;
  std::vector<std::vector<int>> theta;
};

LdaLocal init_lda_local(const Corpus& corpus, int topics, std::span<const std::size_t> docs, Rng& rng);

// One collapsed Gibbs pass over `batch_docs`, reading counts from `counts`
// plus the changes made so far in this batch. Negative counts (possible
// under staleness) are clamped to 0 inside the conditional. Returns the net
// change to phi and phi_tilde.
SparseDelta lda_gibbs_batch(const LdaSpec& spec, const Corpus& corpus, std::span<const double> counts,
                            LdaLocal& local, std::span<const std::size_t> batch_docs, Rng& rng);

// Topic weights used by the sampler for one token, excluding that token.
std::vector<double> lda_conditional(const LdaSpec& spec, int vocab, std::span<const double> counts,
                                    std::span<const int> theta, std::uint32_t word);

// Complete-data log likelihood log p(w | z) + log p(z) in collapsed
// Dirichlet-multinomial form.
double lda_word_loglik(const LdaSpec& spec, int vocab, std::span<const double> counts);
double lda_doc_loglik(const LdaSpec& spec, std::span<const int> theta);
double lda_loglik(const LdaSpec& spec, int vocab, std::span<const double> counts,
                  std::span<const std::vector<int>> thetas);

class LdaWorkload final : public Workload {
 public:
  LdaWorkload(LdaSpec spec, std::shared_ptr<const Corpus> corpus);

  std::string kind() const override { return "lda"; }
  std::size_t dim() const override { return layout_.dim(); }
  std::size_t num_units() const override { return corpus_->docs.size(); }
  bool sparse_updates() const override { return true; }
  bool shuffle_within_shard() const override { return false; }
  // D / (10 P) documents.
  std::size_t default_batch_size(int workers) const override;

  ParamVector init_params(Rng&) const override { return ParamVector(dim(), 0.0); }
  std::unique_ptr<WorkerLocal> make_local(std::span<const std::size_t> shard, Rng& rng) const override;
  void contribute_initial(ParamVector& params, const WorkerLocal& local) const override;
  RawUpdate compute_update(const ParamVector& params, std::span<const std::size_t> batch, WorkerLocal* local,
                           Rng& rng) const override;

  std::string metric_name() const override { return "loglik"; }
  Direction metric_direction() const override { return Direction::AtLeast; }
  double evaluate(const ParamVector& params, std::span<const WorkerLocal* const> locals) const override;

  const LdaSpec& spec() const { return spec_; }
  const LdaLayout& layout() const { return layout_; }

 private:
  LdaSpec spec_;
  std::shared_ptr<const Corpus> corpus_;
  LdaLayout layout_;
};

}  // namespace stalesim
