#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "catseq/detection.hpp"
#include "catseq/error.hpp"

using namespace catseq;

namespace {

ScoreSeries make_scores(const std::vector<std::vector<double>>& contributions,
                        std::int64_t first_time = 0) {
  ScoreSeries s;
  for (std::size_t j = 0; j < contributions.front().size(); ++j) {
    s.sensors.push_back("s" + std::to_string(j));
  }
  for (std::size_t i = 0; i < contributions.size(); ++i) {
    s.times.push_back(first_time + static_cast<std::int64_t>(i));
    double total = 0.0;
    for (double c : contributions[i]) total += c;
    s.scores.push_back(total);
    s.contributions.push_back(contributions[i]);
  }
  return s;
}

ScoreSeries random_scores(std::mt19937_64& rng, std::size_t n, std::size_t sensors) {
  std::exponential_distribution<double> e(1.0);
  std::vector<std::vector<double>> c(n, std::vector<double>(sensors));
  for (auto& row : c) {
    for (auto& v : row) v = e(rng);
  }
  return make_scores(c);
}

// Order-statistic interpolation written out by hand for the oracle.
double sorted_interpolation(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

}  // namespace

TEST_CASE("percentile interpolates between order statistics") {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(999 - i);
  CHECK(percentile(v, 99.5) == doctest::Approx(994.005).epsilon(1e-12));
  const auto th = calibrate_threshold(v, 1.0);
  CHECK(th.value == doctest::Approx(994.005).epsilon(1e-12));
  CHECK(calibrate_threshold(v, 1.25).value == doctest::Approx(1.25 * 994.005).epsilon(1e-12));
  CHECK(calibrate_threshold(std::vector<double>(20, 3.0), 1.5).value == doctest::Approx(4.5));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> w(1 + rep * 3);
    for (auto& x : w) x = u(rng);
    for (double q : {0.0, 12.5, 50.0, 99.5, 100.0}) {
      CHECK(percentile(w, q) == doctest::Approx(sorted_interpolation(w, q)).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(calibrate_threshold(std::vector<double>{}, 1.0), Error);
}

TEST_CASE("thresholds survive a JSON round trip and rescale with alpha") {
  const auto th = calibrate_threshold(std::vector<double>{1, 2, 3, 4}, 1.25);
  const auto back = Threshold::from_json(nlohmann::json::parse(th.to_json().dump()));
  CHECK(back.value == th.value);
  CHECK(back.percentile_value == th.percentile_value);
  CHECK(with_alpha(th, 2.0).value == doctest::Approx(2.0 * th.percentile_value));
}

TEST_CASE("flagging is strict") {
  const auto s = make_scores({{1.0}, {2.0}, {3.0}, {2.0}, {9.0}});
  Threshold th;
  th.value = 2.0;
  CHECK(flag_times(s, th) == std::vector<std::int64_t>{2, 4});
  th.value = 10.0;
  CHECK(flag_times(s, th).empty());
}

TEST_CASE("clustering merges gaps up to the limit") {
  CHECK(default_cluster_gap(1000) == 5);
  CHECK(default_cluster_gap(5000) == 25);
  auto one = cluster_events({10, 11, 12}, 5);
  REQUIRE(one.size() == 1);
  CHECK(one[0].start == 10);
  CHECK(one[0].end == 12);
  CHECK(cluster_events({10, 100}, 5).size() == 2);
  const auto chain = cluster_events({19, 10, 14}, 5);
  REQUIRE(chain.size() == 1);
  CHECK(chain[0].start == 10);
  CHECK(chain[0].end == 19);
  CHECK(cluster_events({10, 16}, 5).size() == 2);
  CHECK(cluster_events({}, 5).empty());
}

TEST_CASE("clustering is idempotent on its own output") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::int64_t> t(0, 500);
  std::vector<std::int64_t> flags;
  for (int i = 0; i < 60; ++i) flags.push_back(t(rng));
  std::sort(flags.begin(), flags.end());
  flags.erase(std::unique(flags.begin(), flags.end()), flags.end());
  const auto events = cluster_events(flags, 5);
  std::vector<std::int64_t> members;
  for (const auto& e : events) {
    members.insert(members.end(), e.member_times.begin(), e.member_times.end());
  }
  CHECK(members == flags);
  const auto again = cluster_events(members, 5);
  REQUIRE(again.size() == events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    CHECK(again[i].start == events[i].start);
    CHECK(again[i].end == events[i].end);
  }
}

TEST_CASE("peak scores come from the series") {
  const auto s = make_scores({{1.0}, {5.0}, {3.0}, {0.0}, {7.0}});
  const auto events = cluster_events({1, 2, 4}, 1, &s);
  REQUIRE(events.size() == 2);
  CHECK(events[0].peak_score == 5.0);
  CHECK(events[1].peak_score == 7.0);
}

TEST_CASE("suspect ranking sums contributions and breaks ties by name") {
  const auto s = make_scores({{0.0, 2.0, 0.0}, {1.0, 0.0, 1.0}, {0.0, 0.0, 4.0}});
  const auto single = suspect_ranking(s, {0});
  CHECK(single.entries[0].sensor == "s1");
  CHECK(single.entries[0].score == 2.0);
  CHECK(single.entries[0].rank == 1);
  CHECK(single.order() == std::vector<std::string>{"s1", "s0", "s2"});
  const auto both = suspect_ranking(s, {1});
  CHECK(both.order() == std::vector<std::string>{"s0", "s2", "s1"});
  const auto none = suspect_ranking(s, {});
  for (const auto& e : none.entries) CHECK(e.score == 0.0);
  CHECK_THROWS_AS(suspect_ranking(s, {7}), Error);
}

TEST_CASE("suspect scores conserve the total anomaly score") {
  std::mt19937_64 rng(8);
  const auto s = random_scores(rng, 200, 6);
  std::vector<std::int64_t> times;
  double total = 0.0;
  for (std::int64_t t = 0; t < 200; t += 3) {
    times.push_back(t);
    total += s.scores[static_cast<std::size_t>(t)];
  }
  double sum = 0.0;
  for (const auto& e : suspect_ranking(s, times).entries) sum += e.score;
  CHECK(sum == doctest::Approx(total).epsilon(1e-9));
}

TEST_CASE("ensemble voting") {
  const std::vector<std::int64_t> a{1, 2, 3}, b{3, 4}, c{2, 3, 9};
  CHECK(ensemble_flag({a}) == a);
  CHECK(ensemble_flag({a, b}) == std::vector<std::int64_t>{1, 2, 3, 4});
  CHECK(ensemble_flag({a, b, c}, EnsemblePolicy::kMajority) == std::vector<std::int64_t>{2, 3});
  CHECK(ensemble_flag({a, b}, EnsemblePolicy::kMajority) == std::vector<std::int64_t>{3});
  CHECK_THROWS_AS(ensemble_flag({}), Error);
  CHECK(parse_ensemble_policy("majority") == EnsemblePolicy::kMajority);
  CHECK_THROWS_AS(parse_ensemble_policy("most"), Error);
}

TEST_CASE("re-flagging the reference respects the percentile and shrinks with alpha") {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    const auto s = random_scores(rng, 1000 + 37 * static_cast<std::size_t>(rep), 3);
    const auto base = calibrate_threshold(s, 1.0);
    const auto flagged = flag_times(s, base);
    // Distinct scores: exactly the order statistics above the interpolation point.
    const auto above = static_cast<std::size_t>(
        std::ceil(0.005 * static_cast<double>(s.size() - 1) - 1e-9));
    CHECK(flagged.size() == above);
    std::size_t previous = flagged.size();
    for (double alpha : {1.25, 1.5}) {
      const auto next = flag_times(s, with_alpha(base, alpha));
      CHECK(next.size() <= previous);
      CHECK(std::includes(flagged.begin(), flagged.end(), next.begin(), next.end()));
      previous = next.size();
    }
  }
}

TEST_CASE("a thousand distinct reference scores flag exactly half a percent") {
  std::mt19937_64 rng(12);
  const auto s = random_scores(rng, 1000, 2);
  CHECK(flag_times(s, calibrate_threshold(s, 1.0)).size() == 5);
}

TEST_CASE("score series validation") {
  auto s = make_scores({{1.0, 2.0}, {0.5, 0.5}}, 10);
  CHECK_NOTHROW(s.validate());
  CHECK(s.position(11) == 1);
  CHECK_THROWS_AS(s.position(3), Error);
  s.scores[0] = 4.0;
  CHECK_THROWS_AS(s.validate(), Error);
}
