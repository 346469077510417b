#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include <boost/math/distributions/chi_squared.hpp>

#include "stalesim/delay.hpp"

using namespace stalesim;

TEST_CASE("uniform delay degenerates to zero for s = 0 and s = 1") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    CHECK(sample_delay_uniform(0, rng) == 0);
    CHECK(sample_delay_uniform(1, rng) == 0);
  }
}

TEST_CASE("uniform delay with s = 4 has mean 1.5 and equal frequencies") {
  Rng rng(7);
  const int n = 1000000;
  std::vector<int> counts(4, 0);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const int r = sample_delay_uniform(4, rng);
    REQUIRE(r >= 0);
    REQUIRE(r < 4);
    ++counts[r];
    sum += r;
  }
  CHECK(std::abs(sum / n - 1.5) < 0.01);
  for (int c : counts) CHECK(std::abs(static_cast<double>(c) / n - 0.25) < 0.01);
}

TEST_CASE("iteration delay matrices") {
  SUBCASE("uniform(0) is all zero") {
    Rng rng(3);
    const auto m = sample_iteration_delays(UniformBounded{0}, 3, rng);
    for (int s = 0; s < 3; ++s)
      for (int d = 0; d < 3; ++d) CHECK(m.at(s, d) == 0);
  }
  SUBCASE("uniform(8) entries average 3.5") {
    Rng rng(11);
    const int iters = 100000;
    std::vector<double> sums(4, 0.0);
    for (int i = 0; i < iters; ++i) {
      const auto m = sample_iteration_delays(UniformBounded{8}, 2, rng);
      for (int s = 0; s < 2; ++s)
        for (int d = 0; d < 2; ++d) {
          REQUIRE(m.at(s, d) <= 7);
          sums[static_cast<std::size_t>(s * 2 + d)] += m.at(s, d);
        }
    }
    for (double s : sums) CHECK(std::abs(s / iters - 3.5) < 0.05);
  }
  SUBCASE("geometric rows are constant and the straggler set changes") {
    const auto match = match_mean_geometric(16, 0.1, 1, 8);
    GeometricStraggler g{0.1, match.nonstraggler_success, 1, 100};
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
      const auto m = sample_iteration_delays(g, 8, rng);
      for (int s = 0; s < 8; ++s) {
        for (int d = 1; d < 8; ++d) CHECK(m.at(s, d) == m.at(s, 0));
        CHECK(m.at(s, 0) <= 100);
      }
    }
  }
  SUBCASE("same seed gives the same matrices") {
    Rng a(99), b(99);
    for (int i = 0; i < 50; ++i) {
      CHECK(sample_iteration_delays(UniformBounded{5}, 4, a) == sample_iteration_delays(UniformBounded{5}, 4, b));
    }
  }
}

TEST_CASE("geometric delays are capped") {
  GeometricStraggler g{0.01, 0.01, 1, 3};
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const auto m = sample_iteration_delays(g, 2, rng);
    CHECK(m.at(0, 0) <= 3);
    CHECK(m.at(1, 1) <= 3);
  }
  CHECK(max_extra_delay(g) == 3);
  CHECK(max_extra_delay(UniformBounded{0}) == 0);
  CHECK(max_extra_delay(UniformBounded{1}) == 0);
  CHECK(max_extra_delay(UniformBounded{5}) == 4);
}

TEST_CASE("mean matching for the straggler model") {
  SUBCASE("closed form for p_strag = 0.1, one straggler of eight, s = 16") {
    // (1/8) * 9 + (7/8) * (1 - p) / p = 7.5  =>  (1 - p) / p = (7.5 - 9/8) * 8/7
    const double m = (7.5 - 9.0 / 8.0) * 8.0 / 7.0;
    const double expected = 1.0 / (1.0 + m);
    const auto match = match_mean_geometric(16, 0.1, 1, 8);
    CHECK(match.nonstraggler_success == doctest::Approx(expected).epsilon(1e-12));
    CHECK_FALSE(match.warning.has_value());

    GeometricStraggler g{0.1, match.nonstraggler_success, 1, 100000};
    Rng rng(21);
    double sum = 0.0;
    const int iters = 125000;  // 10^6 source draws
    for (int i = 0; i < iters; ++i) {
      const auto d = sample_iteration_delays(g, 8, rng);
      for (int s = 0; s < 8; ++s) sum += d.at(s, 0);
    }
    CHECK(std::abs(sum / (iters * 8.0) - 7.5) < 0.05);
  }
  SUBCASE("target equal to the straggler share gives p_fast = 1") {
    // one straggler of two with p = 0.5 contributes 0.5 * 1 = 0.5 = (2 - 1)/2
    const auto match = match_mean_geometric(2, 0.5, 1, 2);
    CHECK(match.nonstraggler_success == 1.0);
  }
  SUBCASE("every worker straggling warns and returns 1") {
    const auto match = match_mean_geometric(16, 0.1, 4, 4);
    CHECK(match.nonstraggler_success == 1.0);
    CHECK(match.warning.has_value());
  }
  SUBCASE("stragglers above the target are infeasible") {
    CHECK_THROWS_AS(match_mean_geometric(2, 0.01, 1, 2), InfeasibleMeanError);
  }
}

TEST_CASE("delay spec validation") {
  CHECK_THROWS_AS(validate(UniformBounded{-1}, 2), ConfigError);
  CHECK_THROWS_AS(validate(GeometricStraggler{0.0, 1.0, 1, 10}, 2), ConfigError);
  CHECK_THROWS_AS(validate(GeometricStraggler{0.5, 1.5, 1, 10}, 2), ConfigError);
  CHECK_THROWS_AS(validate(GeometricStraggler{0.5, 1.0, 3, 10}, 2), ConfigError);
  CHECK_THROWS_AS(validate(GeometricStraggler{0.5, 1.0, 1, 0}, 2), ConfigError);
  CHECK_NOTHROW(validate(GeometricStraggler{0.5, 1.0, 1, 10}, 2));
  CHECK(describe(UniformBounded{4}) == "uniform(s=4)");
}

namespace {

UpdateMsg msg(int source, std::uint64_t gen) {
  return UpdateMsg{source, gen, std::make_shared<ParamDelta>(ParamVector{static_cast<double>(source)})};
}

}  // namespace

TEST_CASE("transit queue scheduling and draining") {
  SUBCASE("zero delays arrive next iteration") {
    TransitQueue q;
    const std::vector<int> d{0, 0, 0};
    q.schedule(msg(1, 4), d);
    CHECK(q.pending() == 3);
    CHECK(q.drain(4).empty());
    const auto got = q.drain(5);
    REQUIRE(got.size() == 3);
    for (int p = 0; p < 3; ++p) {
      CHECK(got[static_cast<std::size_t>(p)].destination == p);
      CHECK(got[static_cast<std::size_t>(p)].arrival_iter == 5);
    }
    CHECK(q.empty());
  }
  SUBCASE("gen 5 with delay 3 arrives at 9") {
    TransitQueue q;
    q.schedule(msg(0, 5), std::vector<int>{0, 0, 3});
    CHECK(q.next_arrival() == 6u);
    CHECK(q.drain(6).size() == 2);
    CHECK(q.drain(8).empty());
    const auto got = q.drain(9);
    REQUIRE(got.size() == 1);
    CHECK(got[0].destination == 2);
    CHECK(got[0].arrival_iter == 9);
  }
  SUBCASE("partial drains") {
    TransitQueue q;
    q.schedule(msg(0, 1), std::vector<int>{1});  // arrives 3
    q.schedule(msg(0, 2), std::vector<int>{2});  // arrives 5
    CHECK(q.drain(4).size() == 1);
    CHECK(q.pending() == 1);
    CHECK(q.oldest_pending_gen() == 2u);
    CHECK(q.drain(5).size() == 1);
    CHECK(q.empty());
    CHECK_FALSE(q.next_arrival().has_value());
  }
  SUBCASE("ties drain by generation, source, destination") {
    TransitQueue q;
    q.schedule(msg(1, 2), std::vector<int>{0, 0});  // arrives 3
    q.schedule(msg(0, 2), std::vector<int>{0, 0});  // arrives 3
    q.schedule(msg(1, 1), std::vector<int>{1, 1});  // arrives 3
    const auto got = q.drain(3);
    REQUIRE(got.size() == 6);
    std::vector<std::tuple<std::uint64_t, int, int>> keys;
    for (const auto& d : got) keys.emplace_back(d.msg.gen_iter, d.msg.source, d.destination);
    CHECK(std::is_sorted(keys.begin(), keys.end()));
    CHECK(std::get<0>(keys.front()) == 1);
  }
  SUBCASE("empty queue drains nothing") {
    TransitQueue q;
    CHECK(q.drain(100).empty());
  }
}

TEST_CASE("every scheduled pair drains exactly once within the staleness bound") {
  const int P = 4;
  const int s = 6;
  Rng rng(17);
  TransitQueue q;
  std::map<std::tuple<std::uint64_t, int, int>, int> seen;
  std::size_t scheduled = 0;
  for (std::uint64_t t = 0; t < 200; ++t) {
    for (const auto& d : q.drain(t)) {
      CHECK(d.arrival_iter >= d.msg.gen_iter + 1);
      CHECK(d.arrival_iter - d.msg.gen_iter <= static_cast<std::uint64_t>(std::max(s, 1)));
      ++seen[{d.msg.gen_iter, d.msg.source, d.destination}];
    }
    const auto delays = sample_iteration_delays(UniformBounded{s}, P, rng);
    for (int p = 0; p < P; ++p) {
      q.schedule(msg(p, t), delays.row(p));
      scheduled += P;
    }
  }
  for (const auto& d : q.drain(1000)) ++seen[{d.msg.gen_iter, d.msg.source, d.destination}];
  CHECK(seen.size() == scheduled);
  for (const auto& [k, n] : seen) CHECK(n == 1);
}

TEST_CASE("uniform per-pair means and chi-square uniformity") {
  for (int s : {2, 4, 8, 16}) {
    Rng rng(1000 + s);
    const int n = 100000;
    std::vector<double> counts(static_cast<std::size_t>(s), 0.0);
    double sum = 0.0;
    for (int i = 0; i < n / 4; ++i) {
      const auto m = sample_iteration_delays(UniformBounded{s}, 2, rng);
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          counts[static_cast<std::size_t>(m.at(a, b))] += 1.0;
          sum += m.at(a, b);
        }
    }
    const double mean = (s - 1) / 2.0;
    const double sd = std::sqrt((static_cast<double>(s) * s - 1.0) / 12.0);
    CHECK(std::abs(sum / n - mean) <= 3.0 * sd / std::sqrt(static_cast<double>(n)));
    double chi2 = 0.0;
    const double expected = static_cast<double>(n) / s;
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    const boost::math::chi_squared dist(s - 1);
    CHECK(boost::math::cdf(boost::math::complement(dist, chi2)) > 0.001);
  }
}
