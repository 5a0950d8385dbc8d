#include <gtest/gtest.h>

#include <random>

#include "piskip/index_layer.hpp"
#include "piskip/search.hpp"
#include "test_util.hpp"

using namespace piskip;
using piskip::testing::BruteInterception;
using piskip::testing::RandomKeys;
using piskip::testing::WithValues;

namespace
{
auto
LevelKeys(const IndexLayer &index, const std::size_t l)  //
    -> std::vector<Key>
{
  const auto &lv = index.level(l);
  return {lv.keys.begin(), lv.keys.begin() + static_cast<std::ptrdiff_t>(lv.key_count)};
}

}  // namespace

TEST(MaskToCount, DecodesUnaryMasks)
{
  EXPECT_EQ(MaskToCount(0b0000, 4), 0U);
  EXPECT_EQ(MaskToCount(0b0011, 4), 2U);
  EXPECT_EQ(MaskToCount(0b1111, 4), 4U);
  EXPECT_THROW(MaskToCount(0b0101, 4), CorruptionError);
  EXPECT_THROW(MaskToCount(0b0010, 4), CorruptionError);
  EXPECT_THROW(MaskToCount(0b11111, 4), CorruptionError);
}

TEST(MaskToCount, EntryExample)
{
  const std::vector<Key> entry{10, 20, 30, 40};
  EXPECT_EQ(MaskToCount(LessEqualMaskVector(entry, 25), 4), 2U);
  EXPECT_EQ(MaskToCount(LessEqualMaskScalar(entry, 25), 4), 2U);
  EXPECT_EQ(MaskToCount(LessEqualMaskVector(entry, 5), 4), 0U);
  EXPECT_EQ(MaskToCount(LessEqualMaskVector(entry, 40), 4), 4U);
}

TEST(IndexBuild, RejectsBadOptions)
{
  const auto s = StorageLayer::BulkLoad(WithValues({1, 2, 3}));
  EXPECT_THROW(IndexLayer::Build(s, IndexOptions{.keys_per_entry = 1}), ConfigError);
  EXPECT_THROW(IndexLayer::Build(s, IndexOptions{.keys_per_entry = 17}), ConfigError);
  EXPECT_THROW(IndexLayer::Build(s, IndexOptions{.workers = 0}), ConfigError);
}

TEST(IndexBuild, AllHeightOneLeavesOnlyTheSentinel)
{
  const auto s =
      StorageLayer::BulkLoad(WithValues(RandomKeys(1000, 1)), StorageOptions{.elevation_prob = 0});
  const auto index = IndexLayer::Build(s, {});
  EXPECT_EQ(index.Height(), 1U);
  ASSERT_EQ(index.level_count(), 1U);
  EXPECT_EQ(index.level(1).key_count, 1U);
  // every query is intercepted by the head
  EXPECT_EQ(TraverseVector(index, 123456), s.head());
}

TEST(IndexBuild, ExplicitHeightsGiveTheExpectedShape)
{
  const std::vector<Key> keys{10, 20, 30, 40, 50, 60};
  const std::vector<std::uint8_t> heights{2, 1, 3, 2, 1, 2};
  const auto s = StorageLayer::BulkLoad(WithValues(keys), heights);
  const auto index = IndexLayer::Build(s, {});
  EXPECT_EQ(index.Height(), 3U);
  EXPECT_EQ(LevelKeys(index, 1), (std::vector<Key>{0, 10, 30, 40, 60}));
  EXPECT_EQ(LevelKeys(index, 2), (std::vector<Key>{0, 30}));
  EXPECT_EQ(index.EntryCounts(), (std::vector<std::size_t>{2, 1}));
  // padding
  EXPECT_EQ(index.level(1).keys.back(), kMaxKey);

  EXPECT_EQ(TraverseScalar(index, 5), s.head());
  EXPECT_EQ(TraverseScalar(index, 35)->key, 30U);
  EXPECT_EQ(TraverseScalar(index, 59)->key, 40U);
  EXPECT_EQ(TraverseScalar(index, 1000)->key, 60U);
}

TEST(IndexBuild, LargeLoadHeightNearLogarithm)
{
  const auto s = StorageLayer::BulkLoad(WithValues(RandomKeys(512 * 1024, 5)));
  const auto index = IndexLayer::Build(s, {});
  // log_4(512K) = 9.5; the tallest of 512K geometric draws lands a level or two above
  EXPECT_GE(index.Height(), 10U);
  EXPECT_LE(index.Height(), 13U);
}

TEST(IndexBuild, WorkerCountDoesNotChangeTheLayout)
{
  const auto s = StorageLayer::BulkLoad(WithValues(RandomKeys(50000, 6)));
  const auto ref = IndexLayer::Build(s, {}).Serialize();
  WorkerPool pool{8};
  for (const std::size_t w : {2U, 3U, 4U, 8U}) {
    EXPECT_EQ(IndexLayer::Build(s, IndexOptions{.workers = w}, &pool).Serialize(), ref)
        << "workers=" << w;
    EXPECT_EQ(IndexLayer::Build(s, IndexOptions{.workers = w}).Serialize(), ref);
  }
}

TEST(IndexProperty, LevelsAreSortedSubsequences)
{
  for (const std::size_t m : {2U, 4U, 8U, 16U}) {
    const auto s = StorageLayer::BulkLoad(WithValues(RandomKeys(20000, m)));
    const auto index = IndexLayer::Build(s, IndexOptions{.keys_per_entry = m});
    std::vector<Key> elevated{0};
    for (const auto *n = s.head()->next; n != nullptr; n = n->next) {
      if (n->height > 1) elevated.push_back(n->key);
    }
    ASSERT_EQ(LevelKeys(index, 1), elevated);
    for (std::size_t l = 1; l <= index.level_count(); ++l) {
      const auto keys = LevelKeys(index, l);
      const auto &lv = index.level(l);
      ASSERT_EQ(lv.entry_count, (lv.key_count + m - 1) / m);
      ASSERT_EQ(keys.front(), kSentinelKey);
      ASSERT_TRUE(std::adjacent_find(keys.begin(), keys.end(), std::greater_equal<>{})
                  == keys.end());
      if (l > 1) {
        const auto below = LevelKeys(index, l - 1);
        ASSERT_TRUE(std::includes(below.begin(), below.end(), keys.begin(), keys.end()));
      }
    }
  }
}

TEST(IndexProperty, EveryQueryReachesItsInterception)
{
  std::mt19937_64 rng{3};
  for (const std::size_t m : {2U, 4U, 16U}) {
    const auto keys = RandomKeys(3000, m, 200000);
    const auto s = StorageLayer::BulkLoad(WithValues(keys), StorageOptions{.seed = m});
    const auto index = IndexLayer::Build(s, IndexOptions{.keys_per_entry = m});
    for (int i = 0; i < 20000; ++i) {
      const auto q = static_cast<Key>(rng() % 200100);
      ASSERT_EQ(TraverseScalar(index, q), BruteInterception(s, q)) << q;
    }
    for (const auto k : keys) ASSERT_EQ(TraverseScalar(index, k), BruteInterception(s, k));
  }
}

TEST(IndexRebuild, DropsTombstonesAndMatchesAFreshBuild)
{
  auto s = StorageLayer::BulkLoad(WithValues(RandomKeys(20000, 9)));
  auto index = IndexLayer::Build(s, {});
  std::vector<std::pair<Key, ValueHandle>> live;
  std::size_t i = 0;
  for (auto *n = s.head()->next; n != nullptr; n = n->next, ++i) {
    if (i % 4 == 1) {
      s.Tombstone(n);
    } else {
      live.emplace_back(n->key, n->value);
    }
  }
  WorkerPool pool{4};
  index = IndexLayer::Rebuild(s, index, IndexOptions{.workers = 4}, &pool);
  EXPECT_EQ(s.live_count(), live.size());
  EXPECT_EQ(s.node_count(), live.size());

  const auto fresh_storage = StorageLayer::BulkLoad(live);
  EXPECT_EQ(index.Serialize(), IndexLayer::Build(fresh_storage, {}).Serialize());
  for (const auto &[k, v] : live) ASSERT_EQ(TraverseVector(index, k), BruteInterception(s, k));
}
