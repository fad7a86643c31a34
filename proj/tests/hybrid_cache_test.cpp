#include <gtest/gtest.h>

#include <set>

#include "hvsto/hybrid_cache.hpp"
#include "json.hpp"

namespace hvsto {
namespace {

BlockAddress A(std::uint64_t i) { return BlockAddress{0, i}; }
Bytes blk(std::uint8_t v) { return Bytes(512, std::byte{v}); }

TEST(CacheConfig, DefaultSharesAndBlockAlignment) {
  CacheConfig c;
  c.capacity_bytes = 10 * 4096 + 100;
  c.validate();
  EXPECT_EQ(c.partition_blocks(Partition::kMetadata, 4096), 2u);
  EXPECT_EQ(c.partition_blocks(Partition::kImage, 4096), 5u);
  EXPECT_EQ(c.partition_blocks(Partition::kActive, 4096), 2u);
}

TEST(CacheConfig, SharesMustSumToOne) {
  CacheConfig c;
  c.image_share = 0.6;
  EXPECT_THROW(c.validate(), Error);
  c.image_share = 0.5;
  c.metadata_share = -0.1;
  c.active_share = 0.6;
  EXPECT_THROW(c.validate(), Error);
}

TEST(MetadataCache, PutThenGetHits) {
  MetadataCache m(4, 512, 100);
  EXPECT_EQ(m.put(A(1), blk(1)), MetadataCache::PutResult::kAdmitted);
  ASSERT_TRUE(m.get(A(1)));
  EXPECT_EQ(*m.get(A(1)), blk(1));
  EXPECT_FALSE(m.get(A(2)));
  EXPECT_EQ(m.stats().hits, 2u);
  EXPECT_EQ(m.stats().misses, 1u);
}

TEST(MetadataCache, ProtectedOldestEntrySurvives) {
  MetadataCache m(2, 512, 100);
  m.set_protection([](const BlockAddress& a) { return a == A(1); });
  m.put(A(1), blk(1));
  m.put(A(2), blk(2));
  EXPECT_EQ(m.put(A(3), blk(3)), MetadataCache::PutResult::kAdmitted);
  EXPECT_TRUE(m.contains(A(1)));
  EXPECT_FALSE(m.contains(A(2)));
  EXPECT_TRUE(m.contains(A(3)));
}

TEST(MetadataCache, AllProtectedBypassesAdmission) {
  MetadataCache m(2, 512, 100);
  m.set_protection([](const BlockAddress& a) { return a.local_id <= 2; });
  m.put(A(1), blk(1));
  m.put(A(2), blk(2));
  EXPECT_EQ(m.put(A(3), blk(3)), MetadataCache::PutResult::kBypassed);
  EXPECT_TRUE(m.contains(A(1)));
  EXPECT_TRUE(m.contains(A(2)));
  EXPECT_FALSE(m.contains(A(3)));
  EXPECT_EQ(m.stats().bypasses, 1u);
}

TEST(MetadataCache, EvictsLeastRecentUnprotectedFirst) {
  MetadataCache m(3, 512, 100);
  std::vector<BlockAddress> evicted;
  m.set_eviction_observer([&](const BlockAddress& a) { evicted.push_back(a); });
  m.put(A(1), blk(1));
  m.put(A(2), blk(2));
  m.put(A(3), blk(3));
  m.get(A(1));  // order now 2, 3, 1
  m.put(A(4), blk(4));
  m.put(A(5), blk(5));
  EXPECT_EQ(evicted, (std::vector<BlockAddress>{A(2), A(3)}));
  EXPECT_EQ(m.keys_lru_to_mru(), (std::vector<BlockAddress>{A(1), A(4), A(5)}));
}

TEST(MetadataCache, ProtectionIsReevaluatedAtEvictionTime) {
  MetadataCache m(2, 512, 100);
  std::set<std::uint64_t> pinned{1};
  m.set_protection([&](const BlockAddress& a) { return pinned.contains(a.local_id); });
  m.put(A(1), blk(1));
  m.put(A(2), blk(2));
  m.put(A(3), blk(3));  // evicts 2
  pinned.clear();        // VM detached
  m.put(A(4), blk(4));   // 1 is now the oldest unprotected entry
  EXPECT_FALSE(m.contains(A(1)));
  EXPECT_TRUE(m.contains(A(3)));
}

TEST(MetadataCache, LookupChargesHitCostOnly) {
  MetadataCache m(2, 512, 100);
  IoContext ctx;
  EXPECT_FALSE(m.lookup(A(1), ctx));
  EXPECT_EQ(ctx.clock, 0u);
  m.admit(A(1), blk(1));
  EXPECT_TRUE(m.lookup(A(1), ctx));
  EXPECT_EQ(ctx.clock, 100u);
  m.invalidate(A(1));
  EXPECT_FALSE(m.contains(A(1)));
}

TEST(MetadataCache, UpdateKeepsSingleEntry) {
  MetadataCache m(2, 512, 100);
  m.put(A(1), blk(1));
  EXPECT_EQ(m.put(A(1), blk(9)), MetadataCache::PutResult::kUpdated);
  EXPECT_EQ(m.size(), 1u);
  EXPECT_EQ(*m.get(A(1)), blk(9));
  EXPECT_EQ(m.bytes(), 512u);
}

TEST(ImageCache, BoundedByCapacityUnderChurn) {
  ImageCache c(16, 512, 0.01);
  for (std::uint64_t i = 0; i < 1000; ++i) {
    c.put(A(i % 50), CachedBlock{blk(1), i});
    ASSERT_LE(c.size(), 16u);
    ASSERT_LE(c.bytes(), 16u * 512);
  }
  c.invalidate(A(49));
  EXPECT_FALSE(c.contains(A(49)));
}

TEST(ImageCache, HitReturnsDataAndReadyTime) {
  ImageCache c(4, 512, 0.01);
  c.put(A(1), CachedBlock{blk(7), 1234});
  const auto g = c.get(A(1));
  ASSERT_TRUE(g);
  EXPECT_EQ(g->data, blk(7));
  EXPECT_EQ(g->ready_at, 1234u);
  EXPECT_FALSE(c.get(A(2)));
}

class ActiveCacheTest : public ::testing::Test {
 protected:
  ActiveCache a{512, 32};
};

TEST_F(ActiveCacheTest, SequentialPairTriggersWindowPrefetch) {
  a.resize(100, 4);
  EXPECT_TRUE(a.note_read(10, 1000).empty());
  const auto ahead = a.note_read(11, 1000);
  ASSERT_EQ(ahead.size(), 32u);
  EXPECT_EQ(ahead.front(), 12u);
  EXPECT_EQ(ahead.back(), 43u);  // [v+2, v+2+W)
}

TEST_F(ActiveCacheTest, RandomReadsIssueNoPrefetch) {
  a.resize(100, 4);
  for (std::uint64_t v : {5u, 90u, 17u, 3u, 60u, 59u}) EXPECT_TRUE(a.note_read(v, 1000).empty());
}

TEST_F(ActiveCacheTest, PrefetchSkipsHeldBlocksAndStopsAtCapacity) {
  a.resize(100, 4);
  a.insert(13, CachedBlock{blk(1), 0});
  a.buffer(14, blk(2));
  a.note_read(20, 25);
  a.note_read(21, 25);  // only 22..24 exist
  a.note_read(11, 1000);
  const auto ahead = a.note_read(12, 1000);
  EXPECT_EQ(std::count(ahead.begin(), ahead.end(), 13u), 0);
  EXPECT_EQ(std::count(ahead.begin(), ahead.end(), 14u), 0);
  EXPECT_EQ(ahead.front(), 15u);
  ActiveCache b(512, 32);
  b.resize(100, 4);
  b.note_read(20, 25);
  EXPECT_EQ(b.note_read(21, 25), (std::vector<std::uint64_t>{22, 23, 24}));
}

TEST_F(ActiveCacheTest, WriteBufferThresholdAndLastWriteWins) {
  a.resize(10, 4);
  EXPECT_FALSE(a.buffer(1, blk(1)));
  EXPECT_FALSE(a.buffer(2, blk(2)));
  EXPECT_FALSE(a.buffer(2, blk(3)));  // same block: one entry
  EXPECT_FALSE(a.buffer(3, blk(4)));
  EXPECT_EQ(a.buffer_blocks(), 3u);
  EXPECT_TRUE(a.buffer(4, blk(5)));  // fourth distinct block reaches the limit
  ASSERT_NE(a.buffered(2), nullptr);
  EXPECT_EQ(*a.buffered(2), blk(3));
  const auto drained = a.drain();
  EXPECT_EQ(drained.size(), 4u);
  EXPECT_EQ(a.buffer_blocks(), 0u);
}

TEST_F(ActiveCacheTest, BufferedWriteShadowsCachedRead) {
  a.resize(10, 4);
  a.insert(5, CachedBlock{blk(1), 0});
  a.buffer(5, blk(2));
  EXPECT_FALSE(a.contains(5));
  EXPECT_EQ(*a.buffered(5), blk(2));
}

TEST_F(ActiveCacheTest, ReadCacheIsLruBounded) {
  a.resize(3, 1);
  for (std::uint64_t v = 0; v < 3; ++v) a.insert(v, CachedBlock{blk(1), 0});
  a.cached(0);
  a.insert(3, CachedBlock{blk(1), 0});
  EXPECT_TRUE(a.contains(0));
  EXPECT_FALSE(a.contains(1));
  a.resize(1, 1);
  EXPECT_EQ(a.read_blocks(), 1u);
  EXPECT_TRUE(a.contains(3));
  a.resize(0, 1);
  a.insert(9, CachedBlock{blk(1), 0});
  EXPECT_EQ(a.read_blocks(), 0u);
}

TEST(CacheStats, JsonReport) {
  CacheStats s;
  s.metadata.hits = 3;
  s.image.bypasses = 1;
  s.flush_full = 2;
  s.flush_save = 1;
  const auto j = nlohmann::json::parse(s.to_json());
  EXPECT_EQ(j["metadata"]["hits"], 3);
  EXPECT_EQ(j["image"]["bypasses"], 1);
  EXPECT_EQ(j["flushes"]["full"], 2);
  EXPECT_EQ(j["flushes"]["save"], 1);
  EXPECT_EQ(j["flushes"]["migrate"], 0);
  EXPECT_TRUE(j["active"].contains("evictions"));
}

}  // namespace
}  // namespace hvsto
