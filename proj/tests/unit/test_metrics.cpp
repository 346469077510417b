#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "stalesim/common.hpp"
#include "stalesim/metrics.hpp"

using namespace stalesim;

namespace {

RunTrace accuracy_trace(const std::vector<std::pair<std::uint64_t, double>>& points) {
  RunTrace t;
  t.run_id = "r";
  for (const auto& [b, v] : points) t.record(b, "accuracy", v);
  return t;
}

RunSummary summary(int s, std::optional<std::uint64_t> batches, std::uint64_t seed = 1) {
  RunSummary r;
  r.run_id = "id" + std::to_string(s) + "_" + std::to_string(seed);
  r.workload = "mlr";
  r.optimizer = "sgd";
  r.staleness = s;
  r.workers = 2;
  r.seed = seed;
  r.batches_to_target = batches;
  r.final_metric = 0.5;
  return r;
}

}  // namespace

TEST_CASE("detect_convergence") {
  const ConvergenceTarget target{"accuracy", 0.92, Direction::AtLeast, 1};
  SUBCASE("satisfied at the first evaluation") {
    CHECK(detect_convergence(accuracy_trace({{0, 0.95}, {100, 0.5}}), target) == 0u);
  }
  SUBCASE("second evaluation") {
    CHECK(detect_convergence(accuracy_trace({{100, 0.5}, {200, 0.93}}), target) == 200u);
  }
  SUBCASE("first crossing of an oscillating metric") {
    CHECK(detect_convergence(accuracy_trace({{100, 0.5}, {200, 0.9}, {300, 0.95}, {400, 0.6}, {500, 0.97}}),
                             target) == 300u);
  }
  SUBCASE("never reached") {
    CHECK_FALSE(detect_convergence(accuracy_trace({{100, 0.5}, {200, 0.9}}), target).has_value());
  }
  SUBCASE("sustained crossing") {
    ConvergenceTarget sustained = target;
    sustained.sustain = 2;
    CHECK(detect_convergence(accuracy_trace({{100, 0.95}, {200, 0.6}, {300, 0.95}, {400, 0.96}}), sustained) ==
          300u);
  }
  SUBCASE("at-most direction") {
    RunTrace t;
    for (auto [b, v] : std::vector<std::pair<std::uint64_t, double>>{{0, 3.0}, {10, 1.0}, {20, 0.4}})
      t.record(b, "loss", v);
    CHECK(detect_convergence(t, ConvergenceTarget{"loss", 0.5, Direction::AtMost, 1}) == 20u);
  }
  SUBCASE("nan never satisfies") {
    CHECK_FALSE(
        detect_convergence(accuracy_trace({{0, std::numeric_limits<double>::quiet_NaN()}}), target).has_value());
  }
  SUBCASE("unknown metric") {
    CHECK_THROWS_AS(detect_convergence(accuracy_trace({{0, 0.1}}), ConvergenceTarget{"loss", 1.0}),
                    UnknownMetricError);
  }
}

TEST_CASE("stricter thresholds never converge earlier") {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::pair<std::uint64_t, double>> pts;
    for (int i = 0; i < 30; ++i) pts.emplace_back(i * 10, u(rng));
    const auto trace = accuracy_trace(pts);
    const double lo = u(rng);
    const double hi = lo + (1.0 - lo) * u(rng);
    const auto a = detect_convergence(trace, ConvergenceTarget{"accuracy", lo});
    const auto b = detect_convergence(trace, ConvergenceTarget{"accuracy", hi});
    if (b) {
      REQUIRE(a.has_value());
      CHECK(*a <= *b);
    }
  }
}

TEST_CASE("aggregate_seeds") {
  SUBCASE("identical triplicate") {
    std::vector<RunSummary> runs{summary(0, 700, 1), summary(0, 700, 2), summary(0, 700, 3)};
    const auto a = aggregate_seeds(runs);
    CHECK(a.mean == 700.0);
    CHECK(a.stddev == 0.0);
    CHECK(a.n == 3);
  }
  SUBCASE("900, 1000, 1100") {
    std::vector<RunSummary> runs{summary(0, 900, 1), summary(0, 1000, 2), summary(0, 1100, 3)};
    const auto a = aggregate_seeds(runs);
    CHECK(a.mean == doctest::Approx(1000.0));
    CHECK(a.stddev == doctest::Approx(100.0));
    CHECK(a.n == 3);
  }
  SUBCASE("single run") {
    std::vector<RunSummary> runs{summary(0, 42)};
    const auto a = aggregate_seeds(runs);
    CHECK(a.mean == 42.0);
    CHECK(a.stddev == 0.0);
    CHECK(a.n == 1);
  }
  SUBCASE("unreached runs are skipped") {
    std::vector<RunSummary> runs{summary(0, 10, 1), summary(0, std::nullopt, 2)};
    CHECK(aggregate_seeds(runs).n == 1);
  }
}

TEST_CASE("normalize_slowdown") {
  SUBCASE("baseline ratio is exactly one") {
    std::vector<RunSummary> g{summary(0, 333, 1), summary(0, 334, 2), summary(0, 1001, 3)};
    CHECK(normalize_slowdown(g).ratios.at(0).mean_ratio == 1.0);
  }
  SUBCASE("six-fold slowdown") {
    std::vector<RunSummary> g{summary(0, 1000), summary(16, 6000)};
    const auto t = normalize_slowdown(g);
    CHECK(t.ratios.at(16).mean_ratio == doctest::Approx(6.0));
  }
  SUBCASE("unconverged staleness is omitted") {
    std::vector<RunSummary> g{summary(0, 1000), summary(8, 2000), summary(16, std::nullopt)};
    const auto t = normalize_slowdown(g);
    CHECK(t.ratios.count(16) == 0);
    CHECK(t.omitted == std::vector<int>{16});
    CHECK(t.omitted_runs.at(16) == 1);
    CHECK(t.ratios.at(8).mean_ratio == doctest::Approx(2.0));
  }
  SUBCASE("missing baseline") {
    std::vector<RunSummary> g{summary(4, 1000)};
    CHECK_THROWS_AS(normalize_slowdown(g), MissingBaselineError);
    std::vector<RunSummary> h{summary(0, std::nullopt), summary(4, 1000)};
    CHECK_THROWS_AS(normalize_slowdown(h), MissingBaselineError);
  }
}

TEST_CASE("trace jsonl round trip") {
  RunTrace t;
  t.run_id = "abc123";
  t.record(0, "accuracy", 0.1);
  t.record(32, "batch_loss", 2.302585092994046);
  t.record(64, "probe_grad_sq", 1e-300);
  t.record(96, "loss", std::numeric_limits<double>::infinity());
  t.record(96, "diverged", 1.0);
  std::stringstream ss;
  write_trace_jsonl(ss, t);
  const auto back = read_trace_jsonl(ss);
  CHECK(back.run_id == t.run_id);
  CHECK(back.diverged);
  CHECK(back.events == t.events);

  std::stringstream bad("{\"run_id\": \"x\", \"batches\": 1,");
  CHECK_THROWS_AS(read_trace_jsonl(bad), FormatError);
}

TEST_CASE("summary csv round trip") {
  std::vector<RunSummary> rows{summary(0, 1234), summary(4, std::nullopt, 9)};
  rows[0].final_metric = 0.123456789012345678;
  std::stringstream ss;
  ss << kSummaryHeader << '\n';
  for (const auto& r : rows) ss << summary_csv_row(r) << '\n';
  CHECK(ss.str().rfind("run_id,workload,optimizer,staleness,workers,seed,batches_to_target,final_metric\n", 0) ==
        0);
  const auto back = read_summary_csv(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].batches_to_target == 1234u);
  CHECK(back[0].final_metric == rows[0].final_metric);
  CHECK_FALSE(back[1].batches_to_target.has_value());
  CHECK(back[1].seed == 9);
  CHECK(back[1].staleness == 4);

  std::stringstream bad("a,b,c\n");
  CHECK_THROWS_AS(read_summary_csv(bad), FormatError);
}

TEST_CASE("direction parsing") {
  CHECK(parse_direction("at_most") == Direction::AtMost);
  CHECK(parse_direction(">=") == Direction::AtLeast);
  CHECK(to_string(Direction::AtLeast) == "at_least");
  CHECK_THROWS_AS(parse_direction("sideways"), ConfigError);
}
