#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "stalesim/coherence.hpp"
#include "stalesim/dnn.hpp"
#include "stalesim/quadratic.hpp"
#include "test_support.hpp"

using namespace stalesim;

namespace {

ProbeSample sample(std::uint64_t iter, ParamVector g) { return ProbeSample{iter, std::move(g)}; }

ParamVector scaled(const ParamVector& v, double c) {
  ParamVector out(v);
  for (double& x : out) x *= c;
  return out;
}

double dot(const ParamVector& a, const ParamVector& b) { return std::inner_product(a.begin(), a.end(), b.begin(), 0.0); }

}  // namespace

TEST_CASE("cosine similarity") {
  const ParamVector a{1.0, -2.0, 0.5};
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_similarity(a, scaled(a, -1.0)) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(cosine_similarity(ParamVector{1.0, 0.0}, ParamVector{0.0, 1.0}) == 0.0);
  CHECK_THROWS_AS(cosine_similarity(ParamVector{0.0, 0.0}, ParamVector{1.0, 0.0}), ZeroVectorError);

  Rng rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> c(0.01, 100.0);
  for (int trial = 0; trial < 200; ++trial) {
    ParamVector x(5), y(5);
    for (auto& v : x) v = g(rng);
    for (auto& v : y) v = g(rng);
    const double base = cosine_similarity(x, y);
    CHECK(base >= -1.0);
    CHECK(base <= 1.0);
    CHECK(std::abs(cosine_similarity(scaled(x, c(rng)), scaled(y, c(rng))) - base) < 1e-12);
  }
}

TEST_CASE("gradient coherence on synthetic windows") {
  const ParamVector gk{1.0, 2.0, -1.0};
  SUBCASE("identical history") {
    std::vector<ProbeSample> h{sample(3, gk), sample(4, gk), sample(5, gk)};
    CHECK(gradient_coherence(h, 5, 3).mu == doctest::Approx(1.0));
  }
  SUBCASE("window {g_k, 2 g_k}") {
    std::vector<ProbeSample> h{sample(4, scaled(gk, 2.0)), sample(5, gk)};
    const auto c = gradient_coherence(h, 5, 2);
    CHECK(c.mu == doctest::Approx(1.0));
    CHECK(c.argmin_iter == 5);
  }
  SUBCASE("window {g_k, -g_k}") {
    std::vector<ProbeSample> h{sample(4, scaled(gk, -1.0)), sample(5, gk)};
    const auto c = gradient_coherence(h, 5, 2);
    CHECK(c.mu == doctest::Approx(-1.0));
    CHECK(c.argmin_iter == 4);
  }
  SUBCASE("entries outside the window are ignored") {
    std::vector<ProbeSample> h{sample(1, scaled(gk, -1.0)), sample(4, scaled(gk, 0.5)), sample(5, gk)};
    CHECK(gradient_coherence(h, 5, 2).mu == doctest::Approx(0.5));
    CHECK(gradient_coherence(h, 5, 5).mu == doctest::Approx(-1.0));
  }
  SUBCASE("missing current gradient") {
    std::vector<ProbeSample> h{sample(4, gk)};
    CHECK_THROWS_AS(gradient_coherence(h, 5, 3), InsufficientHistoryError);
    std::vector<ProbeSample> none;
    CHECK_THROWS_AS(gradient_coherence(none, 0, 1), InsufficientHistoryError);
  }
  SUBCASE("zero current gradient") {
    std::vector<ProbeSample> h{sample(5, ParamVector{0.0, 0.0, 0.0})};
    CHECK_THROWS_AS(gradient_coherence(h, 5, 1), ZeroVectorError);
  }
}

TEST_CASE("scaling the past scales the non-self terms") {
  Rng rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ProbeSample> h;
    for (std::uint64_t t = 0; t < 5; ++t) {
      ParamVector v(4);
      for (auto& x : v) x = g(rng);
      h.push_back(sample(t, v));
    }
    const auto& gk = h.back().grad;
    const double c = 0.5 + trial * 0.03;
    auto past_min = [&](const std::vector<ProbeSample>& hist) {
      double m = 1e300;
      for (std::size_t i = 0; i + 1 < hist.size(); ++i) m = std::min(m, dot(gk, hist[i].grad) / dot(gk, gk));
      return m;
    };
    auto hs = h;
    for (std::size_t i = 0; i + 1 < hs.size(); ++i) hs[i].grad = scaled(hs[i].grad, c);
    CHECK(past_min(hs) == doctest::Approx(c * past_min(h)).epsilon(1e-12));
    CHECK(gradient_coherence(hs, 4, 5).mu == doctest::Approx(std::min(1.0, c * past_min(h))).epsilon(1e-12));
  }
}

TEST_CASE("theorem stepsize") {
  CHECK(theorem_stepsize(0, 1.0, 1, 1.0) == 1.0);
  CHECK(theorem_stepsize(3, 0.5, 4, 2.0) == doctest::Approx(0.03125).epsilon(1e-15));
  double prev = theorem_stepsize(0, 0.7, 3, 1.3);
  for (std::uint64_t k = 1; k < 1000; ++k) {
    const double cur = theorem_stepsize(k, 0.7, 3, 1.3);
    CHECK(cur <= prev);
    prev = cur;
  }
}

TEST_CASE("theorem bound") {
  TheoremParams p;
  p.mu = 1.0;
  p.lipschitz = 1.0;
  p.sigma2 = 0.0;
  p.staleness = 1;
  p.f0 = 1.0;
  p.f_inf = 0.0;
  p.horizon = 100;
  CHECK(theorem_bound(p) == doctest::Approx(0.1).epsilon(1e-15));

  p.sigma2 = 0.3;
  double prev = 1e300;
  for (std::uint64_t T : {100ULL, 10000ULL, 1000000ULL}) {
    p.horizon = T;
    const double b = theorem_bound(p);
    CHECK(b < prev);
    prev = b;
  }

  p.sigma2 = 0.0;
  p.horizon = 500;
  const double one = theorem_bound(p);
  p.staleness = 2;
  CHECK(theorem_bound(p) == doctest::Approx(2.0 * one).epsilon(1e-14));

  // Independent evaluation of the formula.
  p = TheoremParams{0.4, 2.5, 1.7, 3, 5.0, 1.0, 12345};
  const double T = 12345.0;
  const double expected = (3 * 2.5 * 4.0 / (0.4 * 0.4) + 1.7 * std::log(T) / 3) / std::sqrt(T);
  CHECK(theorem_bound(p) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(theorem_bound_at(p, 3.0) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("theorem parameter validation") {
  CHECK_THROWS_AS(TheoremParams({0.0, 1, 0, 1, 1, 0, 10}).validate(), ConfigError);
  CHECK_THROWS_AS(TheoremParams({1.0, 0, 0, 1, 1, 0, 10}).validate(), ConfigError);
  CHECK_THROWS_AS(TheoremParams({1.0, 1, -1, 1, 1, 0, 10}).validate(), ConfigError);
  CHECK_THROWS_AS(TheoremParams({1.0, 1, 0, 0, 1, 0, 10}).validate(), ConfigError);
  CHECK_THROWS_AS(TheoremParams({1.0, 1, 0, 1, 0, 1, 10}).validate(), ConfigError);
  CHECK_THROWS_AS(TheoremParams({1.0, 1, 0, 1, 1, 0, 1}).validate(), ConfigError);
}

TEST_CASE("optimal staleness") {
  TheoremParams p{1.0, 1.0, 1.0, 1, 1.0, 0.0, 3};
  // Horizons are integers, so T = e is approximated by the formula at T = 3.
  CHECK(optimal_staleness(p) == doctest::Approx(std::sqrt(std::log(3.0))).epsilon(1e-15));
  p.sigma2 = 4.0;
  CHECK(optimal_staleness(p) == doctest::Approx(2.0 * std::sqrt(std::log(3.0))).epsilon(1e-15));

  for (const auto& q : {TheoremParams{0.5, 2.0, 3.0, 1, 4.0, 0.5, 10000}, TheoremParams{1.0, 1.0, 1.0, 1, 1.0, 0.0, 1000},
                        TheoremParams{0.2, 0.5, 20.0, 1, 2.0, 0.0, 100000}}) {
    const double star = optimal_staleness(q);
    const double at_star = theorem_bound_at(q, star);
    for (int i = 0; i <= 400; ++i) {
      const double s = star / 4.0 + (4.0 * star - star / 4.0) * i / 400.0;
      CHECK(theorem_bound_at(q, s) >= at_star * (1.0 - 1e-12));
    }
  }
}

namespace {

RunTrace probe_trace(const std::vector<double>& grad_sq, const std::vector<double>& mus) {
  RunTrace t;
  t.run_id = "x";
  for (std::size_t i = 0; i < grad_sq.size(); ++i) {
    t.record(i * 2, kProbeGradSqMetric, grad_sq[i]);
    if (i < mus.size()) t.record(i * 2, kProbeMuMetric, mus[i]);
  }
  return t;
}

}  // namespace

TEST_CASE("verify_bound on a closed-form gradient descent trajectory") {
  // f(x) = 0.5 ||x||^2, L = 1, sigma^2 = 0, gradient = x, so
  // x_{k+1} = (1 - eta_k) x_k with eta_k from the theorem schedule.
  const std::uint64_t T = 1000;
  TheoremParams p{1.0, 1.0, 0.0, 1, 0.0, 0.0, T};
  ParamVector x{3.0, -1.0, 2.0};
  p.f0 = 0.5 * dot(x, x);
  RunTrace t;
  double prev = 1e300;
  for (std::uint64_t k = 0; k < T; ++k) {
    const double gsq = dot(x, x);
    CHECK(gsq <= prev);
    prev = gsq;
    t.record(k, kProbeGradSqMetric, gsq);
    t.record(k, kProbeMuMetric, 1.0);
    const double eta = theorem_stepsize(k, p.mu, p.staleness, p.lipschitz);
    for (double& v : x) v *= (1.0 - eta);
  }
  const std::vector<RunTrace> traces{t};
  const auto r = verify_bound(traces, p);
  CHECK(r.verdict == Verdict::Pass);
  CHECK(r.min_grad_sq <= r.bound);
  CHECK(r.min_mu == 1.0);
  CHECK(r.negative_mu_fraction == 0.0);
  CHECK(r.probes == T);
}

TEST_CASE("verify_bound verdicts") {
  TheoremParams p{0.5, 1.0, 0.0, 1, 1.0, 0.0, 100};  // bound 0.4
  SUBCASE("seed mean is used") {
    const std::vector<RunTrace> traces{probe_trace({1.0, 0.5}, {}), probe_trace({1.0, 0.1}, {})};
    const auto r = verify_bound(traces, p);
    CHECK(r.min_grad_sq == doctest::Approx(0.3));
    CHECK(r.argmin_batches == 2);
    CHECK(r.verdict == Verdict::Pass);
    CHECK(r.seeds == 2);
  }
  SUBCASE("bound violated with positive coherence fails") {
    const std::vector<RunTrace> traces{probe_trace({1.0, 0.9}, {0.8, 0.9})};
    CHECK(verify_bound(traces, p).verdict == Verdict::Fail);
  }
  SUBCASE("bound violated with negative coherence is inconclusive") {
    const std::vector<RunTrace> traces{probe_trace({1.0, 0.9}, {0.8, -0.2})};
    const auto r = verify_bound(traces, p);
    CHECK(r.verdict == Verdict::Inconclusive);
    CHECK(r.negative_mu_fraction == doctest::Approx(0.5));
    CHECK(r.min_mu == doctest::Approx(-0.2));
  }
  SUBCASE("bound holding under a violated coherence assumption is inconclusive") {
    const std::vector<RunTrace> traces{probe_trace({1.0, 0.1}, {0.3, 0.4})};
    const auto r = verify_bound(traces, p);
    CHECK_FALSE(r.mu_assumption_holds);
    CHECK(r.verdict == Verdict::Inconclusive);
  }
  SUBCASE("no probes") {
    const std::vector<RunTrace> traces{RunTrace{}};
    CHECK_THROWS_AS(verify_bound(traces, p), MissingProbesError);
  }
  SUBCASE("report rendering") {
    const std::vector<RunTrace> traces{probe_trace({0.2}, {1.0})};
    const auto text = verify_bound(traces, p).to_key_values();
    CHECK(text.find("verdict=pass\n") != std::string::npos);
    CHECK(text.find("bound=") != std::string::npos);
    CHECK(to_string(Verdict::Inconclusive) == "inconclusive");
  }
}

TEST_CASE("probe gradients") {
  Rng rng(6);
  ClusterParams cp;
  cp.train_samples = 40;
  cp.test_samples = 10;
  cp.features = 3;
  cp.classes = 4;
  auto data = std::make_shared<ClassificationSplit>(make_gaussian_clusters(cp, 1));
  DnnWorkload w(NetSpec{0, 0, 3, 4}, data);
  const auto x = w.init_params(rng);
  std::vector<std::size_t> all(40);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto full = dnn_forward_backward(w.spec(), x, data->train, all).grad;
  const auto probe = probe_gradient(w, x, all);
  CHECK(probe == full);
  CHECK(probe_gradient(w, x, all) == probe);

  const auto subset = choose_fixed_subset(40, 10, rng);
  CHECK(subset.size() == 10);
  CHECK(std::is_sorted(subset.begin(), subset.end()));
  CHECK(std::adjacent_find(subset.begin(), subset.end()) == subset.end());
  CHECK(choose_fixed_subset(5, 10, rng).size() == 5);
}

TEST_CASE("coherence probe history") {
  QuadraticWorkload q(QuadraticSpec{3, 1.0, 1.0, 0.0, false}, 1);
  CoherenceProbe probe({0}, 3, 2);
  CHECK(probe.due(0));
  CHECK_FALSE(probe.due(1));
  for (std::uint64_t k = 0; k < 10; k += 2) probe.record(q, ParamVector{1.0 + k, 0.0, 0.0}, k);
  CHECK(probe.history().size() == 3);
  CHECK(probe.history().front().iter == 4);
  CHECK(probe.history().back().grad == ParamVector{9.0, 0.0, 0.0});
  CHECK_THROWS(probe.push(ProbeSample{8, {1.0, 0.0, 0.0}}));
}

TEST_CASE("lipschitz and variance estimates on a quadratic") {
  QuadraticWorkload q(QuadraticSpec{8, 0.1, 2.0, 0.3, true}, 4);
  Rng rng(3);
  const auto x = q.init_params(rng);
  const std::vector<std::size_t> unit{0};
  CHECK(estimate_lipschitz(q, x, unit, 200, rng) == doctest::Approx(2.0).epsilon(1e-3));
  std::vector<std::size_t> units(16);
  std::iota(units.begin(), units.end(), std::size_t{0});
  // Every quadratic gradient is full-batch, so there is no minibatch noise.
  CHECK(estimate_gradient_variance(q, x, units, 2, 20, rng) == doctest::Approx(0.0));
}

TEST_CASE("minibatch gradient variance of a softmax objective is positive") {
  ClusterParams cp;
  cp.train_samples = 100;
  cp.test_samples = 10;
  cp.features = 3;
  cp.classes = 2;
  auto data = std::make_shared<ClassificationSplit>(make_gaussian_clusters(cp, 1));
  DnnWorkload w(NetSpec{0, 0, 3, 2}, data);
  Rng rng(1);
  const auto x = w.init_params(rng);
  std::vector<std::size_t> all(100);
  std::iota(all.begin(), all.end(), std::size_t{0});
  CHECK(estimate_gradient_variance(w, x, all, 8, 50, rng) > 0.0);
}
