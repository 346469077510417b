#include "stalesim/lda.hpp"

#include <cmath>
#include <map>

namespace stalesim {

LdaLocal init_lda_local(const Corpus& corpus, int topics, std::span<const std::size_t> docs, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, topics - 1);
  LdaLocal local;
  local.doc_ids.assign(docs.begin(), docs.end());
  local.slot.assign(corpus.docs.size(), -1);
  local.z.resize(docs.size());
  local.theta.assign(docs.size(), std::vector<int>(static_cast<std::size_t>(topics), 0));
  for (std::size_t s = 0; s < docs.size(); ++s) {
    local.slot[docs[s]] = static_cast<int>(s);
    const auto& doc = corpus.docs[docs[s]];
    local.z[s].resize(doc.size());
    for (int& k : local.z[s]) {
      k = pick(rng);
      ++local.theta[s][static_cast<std::size_t>(k)];
    }
  }
  return local;
}

namespace {

double clamp0(double x) { return x > 0.0 ? x : 0.0; }

void fill_weights(const LdaSpec& spec, const LdaLayout& lay, std::span<const double> counts,
                  std::span<const int> theta, std::uint32_t word, std::vector<double>& weights) {
  const double wbeta = lay.vocab * spec.beta;
  for (int k = 0; k < lay.topics; ++k) {
    const double dk = theta[static_cast<std::size_t>(k)] + spec.alpha;
    const double wk = clamp0(counts[lay.word_topic(word, k)]) + spec.beta;
    const double tk = clamp0(counts[lay.topic_total(k)]) + wbeta;
    weights[static_cast<std::size_t>(k)] = dk * wk / tk;
  }
}

int sample_topic(const std::vector<double>& weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0) || !std::isfinite(total)) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(weights.size()) - 1);
    return pick(rng);
  }
  std::uniform_real_distribution<double> u(0.0, total);
  double x = u(rng);
  for (std::size_t k = 0; k < weights.size(); ++k) {
    x -= weights[k];
    if (x < 0.0) return static_cast<int>(k);
  }
  return static_cast<int>(weights.size()) - 1;
}

}  // namespace

std::vector<double> lda_conditional(const LdaSpec& spec, int vocab, std::span<const double> counts,
                                    std::span<const int> theta, std::uint32_t word) {
  const LdaLayout lay{vocab, spec.topics};
  std::vector<double> w(static_cast<std::size_t>(spec.topics));
  fill_weights(spec, lay, counts, theta, word, w);
  return w;
}

SparseDelta lda_gibbs_batch(const LdaSpec& spec, const Corpus& corpus, std::span<const double> counts,
                            LdaLocal& local, std::span<const std::size_t> batch_docs, Rng& rng) {
  const LdaLayout lay{corpus.vocab, spec.topics};
  if (counts.size() != lay.dim()) throw std::invalid_argument("count vector does not match vocabulary and topics");
  ParamVector work(counts.begin(), counts.end());
  std::map<std::size_t, double> delta;
  std::vector<double> weights(static_cast<std::size_t>(spec.topics));

  auto bump = [&](std::size_t idx, double by) {
    work[idx] += by;
    delta[idx] += by;
  };

  for (std::size_t doc_id : batch_docs) {
    const int s = local.slot.at(doc_id);
    if (s < 0) throw std::invalid_argument("document is not in this worker's shard");
    const auto& doc = corpus.docs[doc_id];
    auto& z = local.z[static_cast<std::size_t>(s)];
    auto& theta = local.theta[static_cast<std::size_t>(s)];
    for (std::size_t j = 0; j < doc.size(); ++j) {
      const std::uint32_t w = doc[j];
      const int old_k = z[j];
      --theta[static_cast<std::size_t>(old_k)];
      bump(lay.word_topic(w, old_k), -1.0);
      bump(lay.topic_total(old_k), -1.0);

      fill_weights(spec, lay, work, theta, w, weights);
      const int new_k = sample_topic(weights, rng);

      ++theta[static_cast<std::size_t>(new_k)];
      bump(lay.word_topic(w, new_k), 1.0);
      bump(lay.topic_total(new_k), 1.0);
      z[j] = new_k;
    }
  }
  return SparseDelta::from_map(delta, /*drop_zeros=*/true);
}

double lda_word_loglik(const LdaSpec& spec, int vocab, std::span<const double> counts) {
  const LdaLayout lay{vocab, spec.topics};
  const double wbeta = vocab * spec.beta;
  const double lg_beta = std::lgamma(spec.beta);
  const double lg_wbeta = std::lgamma(wbeta);
  double total = 0.0;
  for (int k = 0; k < spec.topics; ++k) {
    double topic = lg_wbeta - vocab * lg_beta;
    for (int w = 0; w < vocab; ++w) topic += std::lgamma(clamp0(counts[lay.word_topic(static_cast<std::size_t>(w), k)]) + spec.beta);
    topic -= std::lgamma(clamp0(counts[lay.topic_total(k)]) + wbeta);
    total += topic;
  }
  return total;
}

double lda_doc_loglik(const LdaSpec& spec, std::span<const int> theta) {
  const double kalpha = spec.topics * spec.alpha;
  double out = std::lgamma(kalpha) - spec.topics * std::lgamma(spec.alpha);
  int length = 0;
  for (int c : theta) {
    out += std::lgamma(c + spec.alpha);
    length += c;
  }
  return out - std::lgamma(length + kalpha);
}

double lda_loglik(const LdaSpec& spec, int vocab, std::span<const double> counts,
                  std::span<const std::vector<int>> thetas) {
  double total = lda_word_loglik(spec, vocab, counts);
  for (const auto& t : thetas) total += lda_doc_loglik(spec, t);
  if (!std::isfinite(total)) throw NonFiniteError("LDA log likelihood is not finite");
  return total;
}

LdaWorkload::LdaWorkload(LdaSpec spec, std::shared_ptr<const Corpus> corpus)
    : spec_(spec), corpus_(std::move(corpus)), layout_{corpus_->vocab, spec.topics} {
  if (spec_.topics < 1) throw ConfigError("LDA needs at least one topic");
  if (!(spec_.alpha > 0) || !(spec_.beta > 0)) throw ConfigError("Dirichlet priors must be positive");
  if (corpus_->vocab < 1) throw ConfigError("empty vocabulary");
}

std::size_t LdaWorkload::default_batch_size(int workers) const {
  return std::max<std::size_t>(1, num_units() / (10 * static_cast<std::size_t>(std::max(workers, 1))));
}

std::unique_ptr<WorkerLocal> LdaWorkload::make_local(std::span<const std::size_t> shard, Rng& rng) const {
  return std::make_unique<LdaLocal>(init_lda_local(*corpus_, spec_.topics, shard, rng));
}

void LdaWorkload::contribute_initial(ParamVector& params, const WorkerLocal& local) const {
  const auto& l = dynamic_cast<const LdaLocal&>(local);
  for (std::size_t s = 0; s < l.doc_ids.size(); ++s) {
    const auto& doc = corpus_->docs[l.doc_ids[s]];
    for (std::size_t j = 0; j < doc.size(); ++j) {
      params[layout_.word_topic(doc[j], l.z[s][j])] += 1.0;
      params[layout_.topic_total(l.z[s][j])] += 1.0;
    }
  }
}

RawUpdate LdaWorkload::compute_update(const ParamVector& params, std::span<const std::size_t> batch,
                                      WorkerLocal* local, Rng& rng) const {
  auto* l = dynamic_cast<LdaLocal*>(local);
  if (!l) throw std::logic_error("LDA worker is missing its local state");
  RawUpdate u;
  u.value = lda_gibbs_batch(spec_, *corpus_, params, *l, batch, rng);
  u.is_gradient = false;
  return u;
}

double LdaWorkload::evaluate(const ParamVector& params, std::span<const WorkerLocal* const> locals) const {
  std::vector<std::vector<int>> thetas;
  thetas.reserve(corpus_->docs.size());
  for (const WorkerLocal* wl : locals) {
    const auto* l = dynamic_cast<const LdaLocal*>(wl);
    if (!l) continue;
    thetas.insert(thetas.end(), l->theta.begin(), l->theta.end());
  }
  return lda_loglik(spec_, corpus_->vocab, params, thetas);
}

}  // namespace stalesim
