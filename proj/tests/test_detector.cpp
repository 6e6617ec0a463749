#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "doctest.h"
#include "ssbjam/detector.hpp"
#include "support.hpp"

using namespace ssbjam;

namespace {

struct ScoreSet {
  std::vector<double> ratios;
  std::vector<Hypothesis> labels;
};

// Overlapping log-normal-ish ratio populations with occasional exact ties.
ScoreSet random_scores(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.5);
  std::bernoulli_distribution coin(0.5), tie(0.1);
  ScoreSet s;
  for (std::size_t i = 0; i < n; ++i) {
    const bool h1 = coin(rng);
    double r = std::exp(g(rng) + (h1 ? 1.5 : -1.5));
    if (tie(rng)) r = std::round(r * 4.0) / 4.0;
    s.ratios.push_back(r);
    s.labels.push_back(h1 ? Hypothesis::H1 : Hypothesis::H0);
  }
  return s;
}

}  // namespace

TEST_SUITE("detector") {
  TEST_CASE("score ratio floors the H0 score") {
    CHECK(score_ratio(ScorePair{0.25, 0.75}) == doctest::Approx(3.0));
    CHECK(score_ratio(ScorePair{0.0, 1.0}) == doctest::Approx(1e12));
  }

  TEST_CASE("double threshold on a hand-built ranking") {
    const std::vector<double> r{9, 8, 7, 6, 3, 2};
    const std::vector<Hypothesis> l{Hypothesis::H1, Hypothesis::H1, Hypothesis::H0,
                                    Hypothesis::H1, Hypothesis::H0, Hypothesis::H0};
    const DoubleThreshold t = calibrate_double_threshold(r, l);
    CHECK(t.gamma2 == 8.0);
    CHECK(t.gamma1 == 3.0);
    // Order of the input does not matter.
    const std::vector<double> r2{3, 9, 6, 2, 8, 7};
    const std::vector<Hypothesis> l2{Hypothesis::H0, Hypothesis::H1, Hypothesis::H1,
                                     Hypothesis::H0, Hypothesis::H1, Hypothesis::H0};
    const DoubleThreshold u = calibrate_double_threshold(r2, l2);
    CHECK(u.gamma1 == t.gamma1);
    CHECK(u.gamma2 == t.gamma2);
  }

  TEST_CASE("double threshold edge cases") {
    const std::vector<double> r{1, 2, 3};
    const std::vector<Hypothesis> all_h1(3, Hypothesis::H1), all_h0(3, Hypothesis::H0);
    CHECK_THROWS_AS(calibrate_double_threshold(r, all_h1), InvalidArgument);
    CHECK_THROWS_AS(calibrate_double_threshold(r, all_h0), InvalidArgument);
    const std::vector<Hypothesis> bottom_h1{Hypothesis::H1, Hypothesis::H0, Hypothesis::H1};
    const auto c = calibrate_double_threshold(r, bottom_h1);
    CHECK(c.gamma1 == -kInf);
    CHECK(c.gamma2 == 3.0);
    CHECK_THROWS_AS(calibrate_double_threshold(r, std::vector<Hypothesis>(2)), InvalidArgument);
  }

  TEST_CASE("decisions outside the deferral band are always right on the calibration set") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const ScoreSet s = random_scores(seed, 50 + 37 * seed);
      const DoubleThreshold t = calibrate_double_threshold(s.ratios, s.labels);
      CHECK(t.gamma1 <= t.gamma2);
      std::size_t confident = 0;
      for (std::size_t i = 0; i < s.ratios.size(); ++i) {
        if (s.ratios[i] < t.gamma1) {
          CHECK(s.labels[i] == Hypothesis::H0);
          ++confident;
        } else if (s.ratios[i] > t.gamma2) {
          CHECK(s.labels[i] == Hypothesis::H1);
          ++confident;
        }
      }
      // Tightening either threshold by one calibration point would admit an error, so the
      // thresholds cannot move outward without breaking purity.
      std::vector<std::size_t> order(s.ratios.size());
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](auto a, auto b) { return s.ratios[a] > s.ratios[b]; });
      std::size_t top = 0;
      while (top < order.size() && s.labels[order[top]] == Hypothesis::H1) ++top;
      if (top < order.size() && top > 0) CHECK(t.gamma2 >= s.ratios[order[top]]);
    }
  }

  TEST_CASE("second-stage threshold is an order statistic bounding the false-alarm rate") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      ScoreSet s = random_scores(seed + 100, 40 + 53 * seed);
      std::vector<double> h0;
      for (std::size_t i = 0; i < s.ratios.size(); ++i)
        if (s.labels[i] == Hypothesis::H0) h0.push_back(s.ratios[i]);
      for (double delta : {0.01, 0.05, 0.1, 0.37}) {
        const double g = calibrate_gamma2(h0, delta);
        const auto alarms = static_cast<std::size_t>(std::count_if(h0.begin(), h0.end(), [&](double r) { return r >= g; }));
        const auto budget = static_cast<std::size_t>(std::floor(delta * static_cast<double>(h0.size()) + 1e-9));
        CHECK(alarms <= budget);
        std::vector<double> sorted = h0;
        std::sort(sorted.rbegin(), sorted.rend());
        if (budget == 0) {
          CHECK(g == kInf);
        } else if (budget < sorted.size() && sorted[budget - 1] != sorted[budget]) {
          CHECK(g == sorted[budget - 1]);
          CHECK(alarms == budget);
        }
      }
    }
  }

  TEST_CASE("ties at the order statistic push the threshold just above") {
    const std::vector<double> h0{5, 5, 5, 5, 1, 1, 1, 1, 1, 1};
    const double g = calibrate_gamma2(h0, 0.2);
    CHECK(g == std::nextafter(5.0, kInf));
    const std::vector<double> flat(100, 2.0);
    CHECK(calibrate_gamma2(flat, 0.05) > 2.0);
    CHECK(calibrate_gamma2(h0, 0.3) == std::nextafter(5.0, kInf));
    CHECK(calibrate_gamma2(h0, 0.4) == 5.0);
    CHECK(calibrate_gamma2(h0, 0.5) == std::nextafter(1.0, kInf));
  }

  TEST_CASE("decision rule branches and strict boundaries") {
    ThresholdSet t;
    t.gamma1 = 0.5;
    t.gamma2 = 4.0;
    t.gamma_second = 2.0;
    auto d = decide(0.1, std::nullopt, t);
    CHECK(d.verdict == Hypothesis::H0);
    CHECK(d.stage == Stage::DNN1);
    d = decide(4.5, std::nullopt, t);
    CHECK(d.verdict == Hypothesis::H1);
    CHECK(d.stage == Stage::DNN1);
    CHECK(defers(0.5, t));
    CHECK(defers(4.0, t));
    CHECK_FALSE(defers(4.0001, t));
    d = decide(1.0, 2.0, t);
    CHECK(d.stage == Stage::DNN2);
    CHECK(d.verdict == Hypothesis::H1);
    CHECK(d.gamma_ratio_2 == 2.0);
    d = decide(1.0, 1.999, t);
    CHECK(d.verdict == Hypothesis::H0);
    CHECK_THROWS_AS(decide(1.0, std::nullopt, t), InvalidArgument);
  }

  TEST_CASE("alarms are monotone in the second-stage threshold") {
    const ScoreSet s = random_scores(3, 400);
    const ScoreSet s2 = random_scores(4, 400);
    ThresholdSet t;
    t.gamma1 = 0.2;
    t.gamma2 = 5.0;
    std::size_t previous = s.ratios.size() + 1;
    for (double g : {0.01, 0.1, 0.5, 1.0, 3.0, 10.0, kInf}) {
      t.gamma_second = g;
      std::size_t alarms = 0;
      for (std::size_t i = 0; i < s.ratios.size(); ++i) alarms += decide(s.ratios[i], s2.ratios[i], t).verdict == Hypothesis::H1;
      CHECK(alarms <= previous);
      previous = alarms;
    }
  }

  TEST_CASE("batch detection matches per-observation detection") {
    const auto data = testing::toy_observations(80, 16, 0.3, 7);
    const auto m1 = ModelParams::initialize(testing::tiny_layout(), 1);
    const auto m2 = ModelParams::initialize(testing::tiny_layout(), 2);
    const auto refs = refs_of(data);
    auto r1 = score_ratios(m1, std::span<const Observation* const>(refs));
    std::sort(r1.begin(), r1.end());
    ThresholdSet t;
    t.gamma1 = r1[20];
    t.gamma2 = r1[60];
    t.gamma_second = 1.0;
    const BatchDetection b = detect_batch(data, m1, m2, t);
    REQUIRE(b.decisions.size() == data.size());
    std::size_t deferred = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const DetectionDecision d = detect(data[i], m1, m2, t);
      CHECK(d.verdict == b.decisions[i].verdict);
      CHECK(d.stage == b.decisions[i].stage);
      CHECK(d.gamma_ratio_1 == b.decisions[i].gamma_ratio_1);
      CHECK(d.gamma_ratio_2 == b.decisions[i].gamma_ratio_2);
      deferred += d.stage == Stage::DNN2;
    }
    CHECK(b.deferred() == deferred);
    CHECK(deferred > 0);
    CHECK(b.deferral_fraction() == doctest::Approx(static_cast<double>(deferred) / 80.0));
    std::size_t total = 0;
    for (const auto& row : b.counts)
      for (auto c : row) total += c;
    CHECK(total == 80);
  }

  TEST_CASE("threshold text round trip, including infinities") {
    ThresholdSet t;
    t.gamma1 = 0.1234567890123456789;
    t.gamma2 = 98765.4321;
    t.gamma_second = kInf;
    t.delta_fa = 0.05;
    CHECK(parse_thresholds(format_thresholds(t)) == t);
    ThresholdSet d;
    CHECK(parse_thresholds(format_thresholds(d)) == d);
    const auto path = (std::filesystem::temp_directory_path() / "ssbjam_thr.txt").string();
    save_thresholds(path, t);
    CHECK(load_thresholds(path) == t);
    std::filesystem::remove(path);
  }

  TEST_CASE("malformed threshold text is rejected") {
    CHECK_THROWS_AS(parse_thresholds("gamma1=1\ngamma2=2\ngamma_second=3\n"), ParseError);
    CHECK_THROWS_AS(parse_thresholds("gamma1=3\ngamma2=2\ngamma_second=3\ndelta_fa=0.1\n"), ParseError);
    CHECK_THROWS_AS(parse_thresholds("gamma1=1\ngamma2=2\ngamma_second=3\ndelta_fa=1.5\n"), ParseError);
    CHECK_THROWS_AS(parse_thresholds("gamma1=abc\ngamma2=2\ngamma_second=3\ndelta_fa=0.1\n"), ParseError);
    CHECK_THROWS_AS(parse_thresholds("gamma1=1\ngamma3=2\n"), ParseError);
    try {
      parse_thresholds("# header\ngamma1=1\ngamma2 2\n");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
  }
}
