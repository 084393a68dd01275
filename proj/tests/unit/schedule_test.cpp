#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "atbptt/schedule.hpp"
#include "test_util.hpp"

namespace sc = atbptt::schedule;
using atbptt::Rng;
using atbptt::testing::random_uniform;

namespace {

double total(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

std::size_t first_argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}
std::size_t first_argmin(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

TEST(TruncProbs, EqualNormsAreUniformInEveryStage) {
  std::vector<double> norms(5, 2.5);
  for (auto st : {sc::Stage::kEarly, sc::Stage::kMiddle, sc::Stage::kLate}) {
    for (double p : sc::trunc_probs(norms, st, 1.0)) EXPECT_NEAR(p, 0.2, 1e-15);
  }
}

TEST(TruncProbs, MiddleQuarter) {
  std::vector<double> norms = {0.1, 3.0, 0.7, 2.2};
  EXPECT_EQ(sc::trunc_probs(norms, sc::Stage::kMiddle, 1.0), (std::vector<double>{0.25, 0.25, 0.25, 0.25}));
}

TEST(TruncProbs, LateTwoSteps) {
  // Raw norms with log-odds ln 4 give softmax (0.8, 0.2).
  std::vector<double> norms = {std::log(4.0), 0.0};
  auto early = sc::trunc_probs(norms, sc::Stage::kEarly, 1.0, false);
  EXPECT_NEAR(early[0], 0.8, 1e-15);
  auto late = sc::trunc_probs(norms, sc::Stage::kLate, 1.0, false);
  EXPECT_NEAR(late[0], 0.2, 1e-15);
  EXPECT_NEAR(late[1], 0.8, 1e-15);
}

TEST(TruncProbs, LargeTauApproachesUniform) {
  auto norms = random_uniform(12, 3, 0.0, 10.0);
  for (bool standardize : {false, true}) {
    auto p = sc::trunc_probs(norms, sc::Stage::kEarly, 1e9, standardize);
    for (double x : p) EXPECT_LT(std::abs(x - 1.0 / 12.0), 1e-6);
  }
}

TEST(TruncProbs, SimplexAndArgmaxProperties) {
  Rng rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t T = 2 + rng.below(30);
    std::vector<double> norms(T);
    for (auto& x : norms) x = rng.uniform() * 5.0;
    for (auto st : {sc::Stage::kEarly, sc::Stage::kMiddle, sc::Stage::kLate}) {
      auto p = sc::trunc_probs(norms, st, 0.1 + rng.uniform(), trial % 2 == 0);
      EXPECT_NEAR(total(p), 1.0, 1e-12);
      for (double x : p) {
        EXPECT_GE(x, 0.0);
        EXPECT_LE(x, 1.0);
        if (st == sc::Stage::kLate) EXPECT_LE(x, 1.0 / static_cast<double>(T - 1) + 1e-15);
      }
      if (st == sc::Stage::kEarly) EXPECT_EQ(first_argmax(p), first_argmax(norms));
      if (st == sc::Stage::kLate) {
        // Entries whose softmax falls below one ulp of 1 round to the same
        // value; among such ties the lowest index is reported.
        const std::size_t lo = first_argmin(norms);
        EXPECT_EQ(p[lo], p[first_argmax(p)]);
        EXPECT_LE(first_argmax(p), lo);
      }
    }
  }
}

TEST(TruncProbs, RejectsBadTau) {
  std::vector<double> norms = {1.0, 2.0};
  EXPECT_THROW(sc::trunc_probs(norms, sc::Stage::kEarly, 0.0), atbptt::ConfigError);
  EXPECT_THROW(sc::window_weight(norms, -1.0), atbptt::ConfigError);
}

TEST(SamplePosition, DegenerateAlwaysSameIndex) {
  std::vector<double> p = {0.0, 0.0, 1.0, 0.0};
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sc::sample_position(p, rng), 3u);
  EXPECT_EQ(sc::position_at(p, 0.9999999999), 3u);
}

TEST(SamplePosition, UniformFrequenciesWithinThreeSigma) {
  const std::size_t T = 8, draws = 100000;
  std::vector<double> p(T, 1.0 / T);
  std::vector<double> hist(T, 0.0);
  Rng rng(2024);
  for (std::size_t i = 0; i < draws; ++i) hist[sc::sample_position(p, rng) - 1] += 1.0;
  const double q = 1.0 / T;
  const double sigma = std::sqrt(draws * q * (1 - q));
  double chi2 = 0.0;
  for (double h : hist) {
    EXPECT_LT(std::abs(h - draws * q), 3.0 * sigma);
    chi2 += (h - draws * q) * (h - draws * q) / (draws * q);
  }
  // 99.9% quantile of chi-square with 7 degrees of freedom.
  EXPECT_LT(chi2, 24.32);
}

TEST(SamplePosition, SeedReproducible) {
  std::vector<double> p = {0.1, 0.6, 0.3};
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sc::sample_position(p, a), sc::sample_position(p, b));
}

TEST(WindowWeight, EqualVariationsUniform) {
  std::vector<double> v(6, 0.3);
  for (double e : sc::window_weight(v, 1.0)) EXPECT_NEAR(e, 1.0 / 6.0, 1e-15);
}

TEST(WindowWeight, DominantVariationConcentrates) {
  std::vector<double> v = {0.1, 0.2, 5.0, 0.05, 0.3};
  auto eta = sc::window_weight(v, 5.0 / 20.0, false);
  EXPECT_GT(eta[2], 0.99);
  EXPECT_NEAR(total(eta), 1.0, 1e-12);
}

TEST(WindowWeight, Equivariant) {
  std::vector<double> v = {0.4, 1.1, 0.2, 0.9};
  std::vector<std::size_t> perm = {2, 0, 3, 1};
  std::vector<double> pv(4);
  for (std::size_t i = 0; i < 4; ++i) pv[i] = v[perm[i]];
  auto e = sc::window_weight(v, 0.7), pe = sc::window_weight(pv, 0.7);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(pe[i], e[perm[i]]);
}

TEST(WindowSize, Examples) {
  for (double eta : {0.0, 0.3, 1.0}) EXPECT_EQ(sc::window_size(40, 0, eta, 100), 40u);
  EXPECT_EQ(sc::window_size(40, 10, 1.0, 100), 50u);
  EXPECT_EQ(sc::window_size(40, 10, 0.0, 100), 30u);
  EXPECT_EQ(sc::window_size(40, 10, 0.5, 35), 35u);
}

TEST(WindowSize, RangeAndMonotonicity) {
  Rng rng(8);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t W = 1 + rng.below(60), d = rng.below(20), N = 1 + rng.below(120);
    const std::size_t lo = W > d ? W - d : 1, hi = std::min(N, W + d);
    std::size_t prev = 0;
    for (int k = 0; k <= 20; ++k) {
      const std::size_t w = sc::window_size(W, d, k / 20.0, N);
      EXPECT_LE(w, hi);
      EXPECT_GE(w, std::min(std::max<std::size_t>(1, lo), hi));
      EXPECT_GE(w, prev);
      prev = w;
    }
  }
}

TEST(StageUpdate, HandSimulatedTransition) {
  sc::ScheduleConfig cfg;
  cfg.thresh_early = 1.5;
  cfg.count_early = 3;
  sc::StageState s;
  const double seq[] = {1.0, 2.0, 1.0, 1.0};
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(s.stage, sc::Stage::kEarly) << i;
    s = sc::update_stage(s, seq[i], cfg);
  }
  EXPECT_EQ(s.stage, sc::Stage::kMiddle);
  EXPECT_EQ(s.c1, 3u);
}

TEST(StageUpdate, LargeVariationStaysEarly) {
  sc::ScheduleConfig cfg;
  cfg.count_early = 2;
  sc::StageState s;
  for (int i = 0; i < 500; ++i) s = sc::update_stage(s, 1.5 + i * 0.01, cfg);
  EXPECT_EQ(s.stage, sc::Stage::kEarly);
  EXPECT_EQ(s.c1, 0u);
}

TEST(StageUpdate, LateIsAbsorbing) {
  sc::ScheduleConfig cfg;
  sc::StageState s{sc::Stage::kLate, 4, 7};
  for (double da : {-10.0, 0.0, 10.0}) {
    auto t = sc::update_stage(s, da, cfg);
    EXPECT_EQ(t.stage, sc::Stage::kLate);
    EXPECT_EQ(t.c1, 4u);
    EXPECT_EQ(t.c2, 7u);
  }
}

TEST(StageUpdate, MatchesReplayOracleAndIsMonotone) {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t epochs = 20 + rng.below(200);
    sc::ScheduleConfig cfg;
    cfg.count_early = sc::count_from_fraction(0.05, epochs);
    cfg.count_mid = sc::count_from_fraction(0.04, epochs);
    std::vector<double> da(epochs);
    for (auto& x : da) x = rng.uniform() * 4.0 - 1.0;
    // Replay oracle: count hits below each threshold in sequence.
    std::size_t hits1 = 0, hits2 = 0, to_mid = 0, to_late = 0;
    for (std::size_t i = 0; i < epochs; ++i) {
      if (to_mid == 0) {
        hits1 += da[i] < 1.5;
        if (hits1 == cfg.count_early) to_mid = i + 1;
      } else if (to_late == 0) {
        hits2 += da[i] < 1.0;
        if (hits2 == cfg.count_mid) to_late = i + 1;
      }
    }
    sc::StageState s;
    int rank_prev = 0;
    for (std::size_t i = 0; i < epochs; ++i) {
      s = sc::update_stage(s, da[i], cfg);
      const int rank = static_cast<int>(s.stage);
      EXPECT_GE(rank, rank_prev);
      rank_prev = rank;
      const int expect = (to_late && i + 1 >= to_late) ? 2 : (to_mid && i + 1 >= to_mid) ? 1 : 0;
      EXPECT_EQ(rank, expect) << "trial " << trial << " epoch " << i;
      if (rank >= 1) EXPECT_LE(s.c1, cfg.count_early);
    }
  }
}

TEST(StageUpdate, CountsFromEpochFractions) {
  EXPECT_EQ(sc::count_from_fraction(0.05, 200), 10u);
  EXPECT_EQ(sc::count_from_fraction(0.04, 200), 8u);
  EXPECT_EQ(sc::count_from_fraction(0.04, 5), 1u);
}
