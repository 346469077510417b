#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "sequential_reference.hpp"
#include "stalesim/dnn.hpp"
#include "stalesim/lda.hpp"
#include "stalesim/mf.hpp"
#include "stalesim/quadratic.hpp"
#include "stalesim/simcore.hpp"

using namespace stalesim;

namespace {

std::shared_ptr<const ClassificationSplit> clusters(int classes, int features, std::size_t train, double spread,
                                                    std::uint64_t seed) {
  ClusterParams p;
  p.train_samples = train;
  p.test_samples = 200;
  p.features = features;
  p.classes = classes;
  p.spread = spread;
  return std::make_shared<ClassificationSplit>(make_gaussian_clusters(p, seed));
}

std::shared_ptr<const Workload> mlr(int classes = 4, double spread = 1.0) {
  return std::make_shared<DnnWorkload>(NetSpec{0, 0, 8, classes}, clusters(classes, 8, 400, spread, 3));
}

std::shared_ptr<const Workload> small_lda() {
  auto corpus = std::make_shared<Corpus>(make_lda_corpus(LdaCorpusParams{60, 50, 4, 0.1, 0.1, 20.0}, 2));
  return std::make_shared<LdaWorkload>(LdaSpec{4, 0.1, 0.1}, corpus);
}

std::shared_ptr<const Workload> small_mf() {
  auto data = std::make_shared<RatingMatrix>(make_low_rank(LowRankParams{30, 30, 3, 0.05, 1.0}, 4).data);
  return std::make_shared<MfWorkload>(MfSpec{30, 30, 3, 1e-4}, data);
}

}  // namespace

TEST_CASE("partition_shards covers every unit once") {
  for (int P : {1, 3, 8}) {
    Rng rng(P);
    const auto shards = partition_shards(101, P, rng);
    REQUIRE(shards.size() == static_cast<std::size_t>(P));
    std::set<std::size_t> seen;
    for (const auto& s : shards) {
      CHECK(s.size() >= 101 / static_cast<std::size_t>(P));
      seen.insert(s.begin(), s.end());
    }
    CHECK(seen.size() == 101);
  }
  Rng rng(1);
  CHECK_THROWS_AS(partition_shards(2, 3, rng), ConfigError);
}

TEST_CASE("shard cursor walks whole epochs") {
  Rng rng(4);
  ShardCursor c({5, 6, 7, 8}, true, rng);
  std::vector<std::size_t> epoch = c.next(4, rng);
  std::sort(epoch.begin(), epoch.end());
  CHECK(epoch == std::vector<std::size_t>{5, 6, 7, 8});
  auto two = c.next(8, rng);
  std::sort(two.begin(), two.end());
  CHECK(two == std::vector<std::size_t>{5, 5, 6, 6, 7, 7, 8, 8});
  ShardCursor fixed({1, 2, 3}, false, rng);
  CHECK(fixed.next(5, rng) == std::vector<std::size_t>{1, 2, 3, 1, 2});
}

TEST_CASE("one worker without staleness equals a sequential loop") {
  SUBCASE("mlr with sgd") {
    auto w = mlr();
    SimOptions o;
    o.optimizer = Sgd{0.05};
    o.seed = 17;
    Simulation sim(w, o);
    const auto ref = testing::sequential_reference(*w, o.optimizer, sim.batch_size(), o.seed, 200);
    for (std::size_t k = 0; k < 200; ++k) {
      sim.begin_iteration();
      REQUIRE(sim.cache(0).params == ref[k]);
      sim.step();
    }
    sim.begin_iteration();
    CHECK(sim.cache(0).params == ref.back());
  }
  SUBCASE("dnn with adam") {
    auto w = std::make_shared<DnnWorkload>(NetSpec{2, 6, 8, 4}, clusters(4, 8, 100, 1.0, 5));
    SimOptions o;
    o.optimizer = Adam{0.01};
    o.seed = 3;
    Simulation sim(w, o);
    const auto ref = testing::sequential_reference(*w, o.optimizer, sim.batch_size(), o.seed, 50);
    for (std::size_t k = 0; k < 50; ++k) sim.step();
    sim.begin_iteration();
    CHECK(sim.cache(0).params == ref.back());
  }
  SUBCASE("sparse mf") {
    auto w = small_mf();
    SimOptions o;
    o.optimizer = Sgd{1.0};
    o.seed = 9;
    Simulation sim(w, o);
    const auto ref = testing::sequential_reference(*w, o.optimizer, sim.batch_size(), o.seed, 100);
    for (std::size_t k = 0; k < 100; ++k) sim.step();
    sim.begin_iteration();
    CHECK(sim.cache(0).params == ref.back());
  }
  SUBCASE("lda counts") {
    auto w = small_lda();
    SimOptions o;
    o.seed = 2;
    Simulation sim(w, o);
    const auto ref = testing::sequential_reference(*w, o.optimizer, sim.batch_size(), o.seed, 30);
    for (std::size_t k = 0; k < 30; ++k) sim.step();
    sim.begin_iteration();
    CHECK(sim.cache(0).params == ref.back());
  }
}

TEST_CASE("without staleness every cache agrees at the start of each iteration") {
  for (int P : {2, 5}) {
    SimOptions o;
    o.workers = P;
    o.optimizer = Sgd{0.05};
    o.seed = 11;
    Simulation sim(mlr(), o);
    for (int k = 0; k < 60; ++k) {
      sim.begin_iteration();
      for (int p = 1; p < P; ++p) REQUIRE(sim.cache(p).params == sim.cache(0).params);
      sim.step();
    }
  }
}

TEST_CASE("with staleness caches diverge but stay within the delay bound") {
  const int P = 4, s = 5;
  SimOptions o;
  o.workers = P;
  o.delay = UniformBounded{s};
  o.optimizer = Sgd{0.05};
  o.seed = 1;
  std::size_t generated = 0, delivered = 0;
  std::map<std::pair<std::uint64_t, int>, int> per_msg;
  SimObserver obs;
  obs.on_generate = [&](const UpdateMsg&) { ++generated; };
  obs.on_deliver = [&](const Delivery& d) {
    ++delivered;
    CHECK(d.arrival_iter >= d.msg.gen_iter + 1);
    CHECK(d.arrival_iter - d.msg.gen_iter <= static_cast<std::uint64_t>(s));
    ++per_msg[{d.msg.gen_iter, d.msg.source}];
  };
  Simulation sim(mlr(), o, obs);
  bool differed = false;
  for (int k = 0; k < 100; ++k) {
    sim.begin_iteration();
    for (int p = 1; p < P; ++p) differed = differed || sim.cache(p).params != sim.cache(0).params;
    sim.step();
  }
  CHECK(differed);
  CHECK(generated == 100 * P);
  sim.flush();
  CHECK(delivered == generated * P);
  for (const auto& [key, n] : per_msg) CHECK(n == P);
  CHECK(sim.queue().empty());
  // Once everything has landed every cache holds the same sum, up to the
  // order of floating point additions.
  for (int p = 1; p < P; ++p)
    for (std::size_t i = 0; i < sim.cache(0).params.size(); ++i)
      CHECK(std::abs(sim.cache(p).params[i] - sim.cache(0).params[i]) < 1e-12);
}

TEST_CASE("lda counts are conserved under staleness") {
  auto w = small_lda();
  const auto& lda = dynamic_cast<const LdaWorkload&>(*w);
  SimOptions o;
  o.workers = 3;
  o.delay = UniformBounded{6};
  o.seed = 8;
  SimObserver obs;
  obs.on_generate = [&](const UpdateMsg& m) {
    const auto& d = std::get<SparseDelta>(*m.delta);
    double net = 0.0;
    std::vector<double> words(4, 0.0), totals(4, 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d.index[i] >= lda.layout().topic_total(0)) {
        totals[d.index[i] - lda.layout().topic_total(0)] += d.value[i];
        net += d.value[i];
      } else {
        words[d.index[i] % 4] += d.value[i];
      }
    }
    CHECK(net == 0.0);
    CHECK(words == totals);
  };
  Simulation sim(w, o, obs);
  double tokens = 0.0;
  for (int k = 0; k < 4; ++k) tokens += sim.cache(0).params[lda.layout().topic_total(k)];
  for (int k = 0; k < 40; ++k) sim.step();
  sim.flush();
  for (int p = 0; p < 3; ++p) {
    CHECK(sim.cache(p).params == sim.cache(0).params);
    double total = 0.0;
    for (int k = 0; k < 4; ++k) total += sim.cache(p).params[lda.layout().topic_total(k)];
    CHECK(total == tokens);
  }
}

TEST_CASE("runs are deterministic") {
  RunOptions r;
  r.sim.workers = 2;
  r.sim.delay = UniformBounded{4};
  r.sim.optimizer = Sgd{0.05};
  r.sim.seed = 42;
  r.budget = 400;
  r.eval_interval = 10;
  r.probe = ProbeOptions{5, 50, 3, 0, 0};
  const auto a = run_simulation(mlr(), r);
  const auto b = run_simulation(mlr(), r);
  CHECK(a.events == b.events);
  r.sim.seed = 43;
  CHECK(run_simulation(mlr(), r).events != a.events);
}

TEST_CASE("zero budget records only the initial evaluation") {
  RunOptions r;
  r.sim.workers = 3;
  r.budget = 0;
  const auto t = run_simulation(mlr(), r);
  REQUIRE(t.events.size() == 1);
  CHECK(t.events[0].batches == 0);
  CHECK(t.events[0].metric == "accuracy");
}

TEST_CASE("evaluation schedule and batch accounting") {
  RunOptions r;
  r.sim.workers = 4;
  r.sim.optimizer = Sgd{0.05};
  r.budget = 410;  // 102 iterations
  r.eval_interval = 25;
  r.record_batch_loss = false;
  const auto t = run_simulation(mlr(), r);
  std::vector<std::uint64_t> at;
  for (const auto* e : t.series("accuracy")) at.push_back(e->batches);
  CHECK(at == std::vector<std::uint64_t>{0, 100, 200, 300, 400, 408});
  CHECK(t.series(kBatchLossMetric).empty());

  r.record_batch_loss = true;
  const auto with_loss = run_simulation(mlr(), r);
  const auto losses = with_loss.series(kBatchLossMetric);
  CHECK(losses.size() == 102);
  CHECK(losses.front()->batches == 4);
  for (std::size_t i = 1; i < with_loss.events.size(); ++i)
    CHECK(with_loss.events[i].batches >= with_loss.events[i - 1].batches);
}

TEST_CASE("mlr on two clusters reaches 99% within 500 batches, matching the sequential loop") {
  auto w = std::make_shared<DnnWorkload>(NetSpec{0, 0, 8, 2}, clusters(2, 8, 1000, 0.3, 7));
  RunOptions r;
  r.sim.optimizer = Sgd{0.01};
  r.sim.seed = 1;
  r.budget = 500;
  r.eval_interval = 1;
  r.target = ConvergenceTarget{"accuracy", 0.99, Direction::AtLeast, 1};
  const auto t = run_simulation(w, r);
  const auto hit = detect_convergence(t, *r.target);
  REQUIRE(hit.has_value());
  CHECK(*hit > 0);
  CHECK(*hit <= 500);

  const auto ref = testing::sequential_reference(*w, r.sim.optimizer, 32, r.sim.seed, 500);
  std::optional<std::uint64_t> ref_hit;
  for (std::size_t k = 0; k < ref.size(); ++k) {
    if (dnn_accuracy(w->spec(), ref[k], w->data().test) >= 0.99) {
      ref_hit = k;
      break;
    }
  }
  CHECK(ref_hit == hit);
}

TEST_CASE("targets stop the run unless disabled") {
  RunOptions r;
  r.sim.optimizer = Sgd{0.1};
  r.budget = 2000;
  r.eval_interval = 1;
  r.target = ConvergenceTarget{"accuracy", 0.5, Direction::AtLeast, 1};
  const auto stopped = run_simulation(mlr(), r);
  const auto hit = detect_convergence(stopped, *r.target);
  REQUIRE(hit);
  CHECK(stopped.events.back().batches == *hit);
  r.stop_at_target = false;
  CHECK(run_simulation(mlr(), r).events.back().batches == 2000);

  r.target = ConvergenceTarget{"loss", 0.5, Direction::AtMost, 1};
  CHECK_THROWS_AS(run_simulation(mlr(), r), ConfigError);
}

TEST_CASE("divergence is recorded and halts the run") {
  auto w = std::make_shared<QuadraticWorkload>(QuadraticSpec{4, 1.0, 1.0, 0.0, false}, 1);
  RunOptions r;
  r.sim.optimizer = Sgd{1e3};
  r.budget = 100000;
  r.eval_interval = 1;
  const auto t = run_simulation(w, r);
  CHECK(t.diverged);
  CHECK(t.events.back().metric == kDivergedMetric);
  CHECK(t.events.back().batches < 100000);
}

TEST_CASE("stepsize schedules override the learning rate") {
  auto w = std::make_shared<QuadraticWorkload>(QuadraticSpec{3, 1.0, 1.0, 0.0, false}, 1);
  SimOptions o;
  o.optimizer = Sgd{123.0};
  o.stepsize = [](std::uint64_t k) { return 0.5 / static_cast<double>(k + 1); };
  Simulation sim(w, o);
  sim.begin_iteration();
  ParamVector x = sim.cache(0).params;
  for (std::uint64_t k = 0; k < 20; ++k) {
    sim.step();
    sim.begin_iteration();
    // gradient of 0.5 ||x||^2 is x
    for (double& v : x) v -= 0.5 / static_cast<double>(k + 1) * v;
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(sim.cache(0).params[i] == doctest::Approx(x[i]).epsilon(1e-14));
  }
}

TEST_CASE("probe events") {
  RunOptions r;
  r.sim.workers = 2;
  r.sim.delay = UniformBounded{3};
  r.sim.optimizer = Sgd{0.05};
  r.budget = 400;
  r.eval_interval = 50;
  r.probe = ProbeOptions{4, 100, 5, 0, 0};
  const auto t = run_simulation(mlr(), r);
  CHECK(t.series(kProbeGradSqMetric).size() == 51);
  CHECK(t.series(kProbeMuMetric).size() == 51);
  CHECK(t.series(probe_cosine_metric(5)).size() == 46);
  for (int lag = 1; lag <= 5; ++lag)
    for (const auto* e : t.series(probe_cosine_metric(lag))) {
      CHECK(e->value >= -1.0);
      CHECK(e->value <= 1.0);
    }
  // interval 4 > window 3: only the self term is in the window
  for (const auto* e : t.series(kProbeMuMetric)) CHECK(e->value == 1.0);

  auto lda = small_lda();
  CHECK_THROWS_AS(run_simulation(lda, r), ConfigError);
}

TEST_CASE("configuration errors") {
  SimOptions o;
  o.workers = 0;
  CHECK_THROWS_AS(Simulation(mlr(), o), ConfigError);
  o.workers = 2;
  o.delay = UniformBounded{-1};
  CHECK_THROWS_AS(Simulation(mlr(), o), ConfigError);
  o.delay = UniformBounded{2};
  o.optimizer = Sgd{0.0};
  CHECK_THROWS_AS(Simulation(mlr(), o), ConfigError);
}
