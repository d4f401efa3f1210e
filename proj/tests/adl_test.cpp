#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "dlmspec/adl.hpp"

namespace dlmspec {
namespace {

constexpr TokenId E = Vocabulary::kEos;

TEST(GenSignal, Examples) {
  const Sequence none(20, 4);
  EXPECT_EQ(gen_signal(none, 20), 20);
  Sequence first(20, 4);
  first[0] = E;
  EXPECT_EQ(gen_signal(first, 20), 0);
  Sequence seventh(20, 4);
  seventh[6] = E;
  EXPECT_EQ(gen_signal(seventh, 20), 6);
  seventh[12] = E;
  EXPECT_EQ(gen_signal(seventh, 20), 6);
}

// rho = 0.5: previous average x and observation l give (x + l) / 2
TEST(Update, IndicatorFiresOnEquality) {
  const auto s = update(AdlState{12.0, 12.0, 0}, 12, 12, AdlConfig{});
  EXPECT_EQ(s.ema_gen, 12.0);
  EXPECT_EQ(s.ema_acc, 12.0);
  EXPECT_EQ(s.k_next, 22);
}

TEST(Update, NoGrowthWhenAcceptanceLags) {
  const auto s = update(AdlState{25.8, 20.2, 0}, 25, 20, AdlConfig{});
  EXPECT_NEAR(s.ema_gen, 25.4, 1e-12);
  EXPECT_NEAR(s.ema_acc, 20.1, 1e-12);
  EXPECT_EQ(s.k_next, 26);
}

TEST(Update, LowerGuardrail) {
  const auto s = update(AdlState{3.0, 3.0, 0}, 3, 3, AdlConfig{});
  EXPECT_EQ(s.k_next, 20);
}

TEST(Update, UpperGuardrail) {
  const auto s = update(AdlState{30.0, 30.0, 0}, 30, 30, AdlConfig{});
  EXPECT_EQ(s.k_next, 30);
}

TEST(Update, IndicatorUsesPostUpdateAverages) {
  // before the step acc < gen; after it acc >= gen
  const auto s = update(AdlState{10.0, 6.0, 0}, 4, 8, AdlConfig{1, 30, 10, 0.5});
  EXPECT_EQ(s.ema_gen, 7.0);
  EXPECT_EQ(s.ema_acc, 7.0);
  EXPECT_EQ(s.k_next, 17);
}

TEST(Update, RhoOneKeepsLastObservation) {
  AdlConfig cfg{1, 50, 3, 1.0};
  const auto s = update(AdlState{40.0, 1.0, 0}, 9, 5, cfg);
  EXPECT_EQ(s.ema_gen, 9.0);
  EXPECT_EQ(s.ema_acc, 5.0);
  EXPECT_EQ(s.k_next, 9);
}

TEST(Update, GeometricConvergence) {
  for (double rho : {0.1, 0.5, 0.9}) {
    AdlConfig cfg{1, 40, 10, rho};
    AdlState s = AdlState::initial(cfg);
    const int L = 14;
    for (int t = 1; t <= 60; ++t) {
      s = update(s, L, L, cfg);
      const double expect = std::pow(1.0 - rho, t) * L;
      EXPECT_NEAR(std::abs(s.ema_gen - L), expect, 1e-9);
      EXPECT_NEAR(std::abs(s.ema_acc - L), expect, 1e-9);
    }
    EXPECT_EQ(s.k_next, std::clamp(static_cast<int>(std::ceil(L + 10.0)), cfg.k_min, cfg.k_max));
  }
}

TEST(Update, ClipUnderFuzz) {
  Rng r(3);
  for (int t = 0; t < 20000; ++t) {
    AdlConfig cfg;
    cfg.k_min = 1 + static_cast<int>(r.next_u64() % 30);
    cfg.k_max = cfg.k_min + static_cast<int>(r.next_u64() % 30);
    cfg.delta = static_cast<int>(r.next_u64() % 20);
    cfg.rho = 0.01 + 0.99 * r.uniform();
    AdlState s = AdlState::initial(cfg);
    for (int step = 0; step < 10; ++step) {
      const int k = s.k_next;
      const int g = static_cast<int>(r.next_u64() % (k + 1));
      const int a = static_cast<int>(r.next_u64() % (k + 1));
      s = update(s, g, a, cfg);
      ASSERT_GE(s.k_next, cfg.k_min);
      ASSERT_LE(s.k_next, cfg.k_max);
      ASSERT_GE(s.ema_gen, 0.0);
      ASSERT_LE(s.ema_gen, cfg.k_max);
    }
  }
}

TEST(AdlConfig, DefaultsAndValidation) {
  const AdlConfig cfg;
  EXPECT_EQ(cfg.k_min, 20);
  EXPECT_EQ(cfg.k_max, 30);
  EXPECT_EQ(cfg.delta, 10);
  EXPECT_EQ(cfg.rho, 0.5);
  EXPECT_EQ(AdlState::initial(cfg).k_next, 30);
  EXPECT_THROW((AdlConfig{5, 4, 1, 0.5}).validate(), Error);
  EXPECT_THROW((AdlConfig{1, 4, -1, 0.5}).validate(), Error);
  EXPECT_THROW((AdlConfig{1, 4, 1, 0.0}).validate(), Error);
}

}  // namespace
}  // namespace dlmspec
