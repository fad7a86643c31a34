#include <gtest/gtest.h>

#include "hvsto/lirs_cache.hpp"
#include "lirs_reference.hpp"

namespace hvsto {
namespace {

using Cache = LirsCache<std::uint64_t, int>;

TEST(Lirs, PutThenGetHits) {
  Cache c(10);
  c.put(1, 5);
  ASSERT_NE(c.get(1), nullptr);
  EXPECT_EQ(*c.get(1), 5);
  EXPECT_EQ(c.get(2), nullptr);
}

TEST(Lirs, HirShareIsOnePercentWithOneBlockMinimum) {
  EXPECT_EQ(Cache(10).hir_capacity(), 1u);
  EXPECT_EQ(Cache(1000).hir_capacity(), 10u);
  EXPECT_EQ(Cache(2).hir_capacity(), 1u);
  EXPECT_EQ(Cache(2).lir_capacity(), 1u);
  EXPECT_EQ(Cache(1).capacity(), 0u);
}

TEST(Lirs, DegenerateCapacityCachesNothing) {
  Cache c(1);
  c.put(1, 1);
  EXPECT_FALSE(c.contains(1));
  EXPECT_EQ(c.size(), 0u);
}

TEST(Lirs, AlternatingPairAlwaysHitsAfterWarmup) {
  Cache c(2);
  std::size_t misses = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto d = c.access(i % 2, 0);
    if (!d.hit) ++misses;
  }
  EXPECT_EQ(misses, 2u);
}

TEST(Lirs, OneTouchScanLeavesHotLirBlocksResident) {
  Cache c(100);
  // Hot working set of 99 blocks, each accessed twice, fills the LIR set.
  for (int rep = 0; rep < 2; ++rep) {
    for (std::uint64_t b = 0; b < 99; ++b) c.access(b, 0);
  }
  std::size_t hot_lir = 0;
  for (std::uint64_t b = 0; b < 99; ++b) hot_lir += c.is_lir(b);
  ASSERT_EQ(hot_lir, 99u);
  for (std::uint64_t b = 1000; b < 1200; ++b) c.access(b, 0);  // 2x capacity scan
  for (std::uint64_t b = 0; b < 99; ++b) EXPECT_TRUE(c.contains(b)) << b;
  std::size_t scan_resident = 0;
  for (std::uint64_t b = 1000; b < 1200; ++b) scan_resident += c.contains(b);
  EXPECT_LE(scan_resident, c.hir_capacity());
}

TEST(Lirs, SingleTouchBlockGoesBeforeTwiceTouchedOnes) {
  Cache c(20);
  for (std::uint64_t b = 0; b < 19; ++b) c.access(b, 0);
  c.access(100, 0);  // touched once
  for (std::uint64_t b = 0; b < 19; ++b) c.access(b, 0);
  // Admit new blocks until 100 leaves; no twice-touched block may leave first.
  std::uint64_t next = 200;
  while (c.contains(100)) {
    const auto d = c.access(next++, 0);
    if (d.evicted) {
      ASSERT_TRUE(*d.evicted == 100 || *d.evicted >= 200) << *d.evicted;
    }
  }
  for (std::uint64_t b = 0; b < 19; ++b) EXPECT_TRUE(c.contains(b));
}

TEST(Lirs, GhostInStackIsPromotedOnReload) {
  Cache c(4);  // 3 LIR + 1 HIR
  for (std::uint64_t b = 1; b <= 3; ++b) c.access(b, 0);
  c.access(10, 0);  // resident HIR
  c.access(11, 0);  // evicts 10, which stays in S as a ghost
  ASSERT_FALSE(c.contains(10));
  ASSERT_TRUE(c.in_stack(10));
  c.access(10, 0);
  EXPECT_TRUE(c.is_lir(10));
  EXPECT_FALSE(c.is_lir(1));  // bottom LIR demoted
  EXPECT_TRUE(c.stack_invariant_holds());
}

TEST(Lirs, EraseDropsBlockEntirely) {
  Cache c(4);
  for (std::uint64_t b = 1; b <= 4; ++b) c.access(b, 0);
  c.erase(1);
  EXPECT_FALSE(c.contains(1));
  EXPECT_FALSE(c.in_stack(1));
  EXPECT_EQ(c.size(), 3u);
  EXPECT_TRUE(c.stack_invariant_holds());
}

TEST(Lirs, StatisticsCountHitsMissesEvictions) {
  Cache c(2);
  c.access(1, 0);
  c.access(2, 0);
  c.access(1, 0);
  c.access(3, 0);
  EXPECT_EQ(c.stats().hits, 1u);
  EXPECT_EQ(c.stats().misses, 3u);
  EXPECT_EQ(c.stats().evictions, 1u);
}

struct TraceCase {
  const char* name;
  std::vector<std::uint64_t> trace;
};

class LirsConformance : public ::testing::TestWithParam<std::tuple<int, std::size_t, double>> {};

TEST_P(LirsConformance, MatchesReferenceDecisionForDecision) {
  const auto [which, capacity, frac] = GetParam();
  std::vector<std::uint64_t> trace;
  switch (which) {
    case 0: trace = testing::loop_trace(10'000, capacity + capacity / 5); break;
    case 1: trace = testing::scan_trace(10'000, capacity * 3 / 4, 21); break;
    default: trace = testing::mixed_trace(10'000, 33); break;
  }
  ASSERT_EQ(trace.size(), 10'000u);
  const auto diverged = testing::first_lirs_divergence(trace, capacity, frac);
  EXPECT_FALSE(diverged.has_value()) << "first divergence at reference " << *diverged;
}

INSTANTIATE_TEST_SUITE_P(
    Traces, LirsConformance,
    ::testing::Combine(::testing::Values(0, 1, 2), ::testing::Values<std::size_t>(2, 10, 100, 250),
                       ::testing::Values(0.01, 0.1, 0.3)));

}  // namespace
}  // namespace hvsto
