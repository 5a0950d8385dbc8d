#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "piskip/storage.hpp"
#include "test_util.hpp"

using namespace piskip;
using piskip::testing::LinkedKeys;
using piskip::testing::RandomKeys;
using piskip::testing::WithValues;

namespace
{
auto
NodeWithKey(const StorageLayer &s, const Key key)  //
    -> DataNode *
{
  for (auto *n = s.head()->next; n != nullptr; n = n->next) {
    if (n->key == key) return n;
  }
  return nullptr;
}

}  // namespace

/*######################################################################################
 * Bulk load and heights
 *####################################################################################*/

TEST(BulkLoad, EmptyInputLeavesOnlyTheSentinel)
{
  const auto s = StorageLayer::BulkLoad({});
  EXPECT_EQ(s.head()->next, nullptr);
  EXPECT_EQ(s.head()->key, kSentinelKey);
  EXPECT_EQ(s.live_count(), 0U);
}

TEST(BulkLoad, ZeroElevationGivesHeightOne)
{
  const auto pairs = WithValues(RandomKeys(5000, 1));
  const auto s = StorageLayer::BulkLoad(pairs, StorageOptions{.elevation_prob = 0.0});
  for (const auto *n = s.head()->next; n != nullptr; n = n->next) ASSERT_EQ(n->height, 1);
}

TEST(BulkLoad, ElevatedFractionMatchesP)
{
  const auto pairs = WithValues(RandomKeys(100000, 2));
  const auto s = StorageLayer::BulkLoad(pairs, StorageOptions{.elevation_prob = 0.25, .seed = 7});
  std::size_t elevated = 0;
  for (const auto *n = s.head()->next; n != nullptr; n = n->next) elevated += n->height > 1;
  EXPECT_NEAR(static_cast<double>(elevated) / 100000.0, 0.25, 0.01);
}

TEST(BulkLoad, HeightsFollowTheGeometricLaw)
{
  // Pr[h >= k] = P^(k-1)
  const auto pairs = WithValues(RandomKeys(200000, 3));
  const auto s = StorageLayer::BulkLoad(pairs, StorageOptions{.elevation_prob = 0.25, .seed = 3});
  std::vector<double> at_least(6, 0.0);
  for (const auto *n = s.head()->next; n != nullptr; n = n->next) {
    for (std::size_t k = 1; k < at_least.size(); ++k) at_least[k] += n->height >= k;
  }
  for (std::size_t k = 1; k < at_least.size(); ++k) {
    const auto expect = std::pow(0.25, static_cast<double>(k - 1));
    EXPECT_NEAR(at_least[k] / 200000.0, expect, 4.0 * std::sqrt(expect / 200000.0) + 1e-4)
        << "k=" << k;
  }
}

TEST(BulkLoad, IsDeterministicPerSeed)
{
  const auto pairs = WithValues(RandomKeys(2000, 4));
  const auto a = StorageLayer::BulkLoad(pairs, StorageOptions{.seed = 5});
  const auto b = StorageLayer::BulkLoad(pairs, StorageOptions{.seed = 5});
  const auto c = StorageLayer::BulkLoad(pairs, StorageOptions{.seed = 6});
  bool differs = false;
  for (auto *x = a.head()->next, *y = b.head()->next, *z = c.head()->next; x != nullptr;
       x = x->next, y = y->next, z = z->next) {
    ASSERT_EQ(x->height, y->height);
    differs |= x->height != z->height;
  }
  EXPECT_TRUE(differs);
}

TEST(BulkLoad, RejectsBadInput)
{
  const std::vector<std::pair<Key, ValueHandle>> unsorted{{5, ToHandle(1)}, {3, ToHandle(1)}};
  const std::vector<std::pair<Key, ValueHandle>> dup{{5, ToHandle(1)}, {5, ToHandle(2)}};
  const std::vector<std::pair<Key, ValueHandle>> reserved{{0, ToHandle(1)}};
  EXPECT_THROW(StorageLayer::BulkLoad(unsorted), std::invalid_argument);
  EXPECT_THROW(StorageLayer::BulkLoad(dup), std::invalid_argument);
  EXPECT_THROW(StorageLayer::BulkLoad(reserved), std::invalid_argument);
}

TEST(BulkLoad, HeightCapFollowsCapacity)
{
  EXPECT_EQ(MaxHeightFor(0.0, 1000), 1);
  // ceil(log_4 2^20) = 10, plus 2
  EXPECT_EQ(MaxHeightFor(0.25, 1U << 20U), 12);
  const HeightGenerator gen{0.9, 1, 4};
  for (Key k = 1; k < 1000; ++k) ASSERT_LE(gen.Draw(k), 4);
}

/*######################################################################################
 * Walks and mutation
 *####################################################################################*/

TEST(WalkFrom, EmptyStorageReturnsTheSentinel)
{
  const auto s = StorageLayer::BulkLoad({});
  EXPECT_EQ(WalkFrom(s.head(), 42), s.head());
}

TEST(WalkFrom, StopsAtThePredecessor)
{
  const auto s = StorageLayer::BulkLoad(WithValues({2, 4, 6}));
  auto *n2 = NodeWithKey(s, 2);
  EXPECT_EQ(WalkFrom(n2, 5)->key, 4U);
  EXPECT_EQ(WalkFrom(n2, 4)->key, 4U);
  EXPECT_EQ(WalkFrom(n2, 100)->key, 6U);
  WalkStats stats;
  WalkFrom(n2, 5, &stats);
  EXPECT_EQ(stats.walks, 1U);
  EXPECT_EQ(stats.nodes, 2U);
}

TEST(WalkFrom, MatchesLinearScanOracle)
{
  const auto keys = RandomKeys(500, 9, 5000);
  const auto s = StorageLayer::BulkLoad(WithValues(keys));
  for (Key q = 0; q <= 5001; ++q) {
    const auto it = std::upper_bound(keys.begin(), keys.end(), q);
    const Key expect = it == keys.begin() ? kSentinelKey : *(it - 1);
    ASSERT_EQ(WalkFrom(s.head(), q)->key, expect) << q;
  }
}

TEST(InsertAfter, LinksWithoutTouchingOthers)
{
  auto s = StorageLayer::BulkLoad(WithValues({10, 20, 30}));
  auto *n10 = NodeWithKey(s, 10);
  auto *n20 = NodeWithKey(s, 20);
  auto *fresh = s.InsertAfter(n10, 15, ToHandle(3), 2);
  EXPECT_EQ(n10->next, fresh);
  EXPECT_EQ(fresh->next, n20);
  EXPECT_EQ(s.update_count(), 1U);
  EXPECT_EQ(s.live_count(), 4U);
  EXPECT_EQ(LinkedKeys(s), (std::vector<Key>{10, 15, 20, 30}));
  EXPECT_THROW(s.InsertAfter(n10, 25, ToHandle(1), 1), CorruptionError);
  EXPECT_THROW(s.InsertAfter(n20, 20, ToHandle(1), 1), CorruptionError);
}

TEST(Tombstone, CountsOnlyTransitions)
{
  auto s = StorageLayer::BulkLoad(WithValues({1, 2, 3}));
  auto *n2 = NodeWithKey(s, 2);
  s.Tombstone(n2);
  s.Tombstone(n2);
  EXPECT_TRUE(n2->deleted);
  EXPECT_EQ(s.update_count(), 1U);
  EXPECT_EQ(s.live_count(), 2U);
  EXPECT_EQ(LinkedKeys(s), (std::vector<Key>{1, 2, 3}));
  EXPECT_THROW(s.Tombstone(s.head()), CorruptionError);
}

TEST(Writer, OverwriteRevivesWithoutStructuralUpdate)
{
  auto s = StorageLayer::BulkLoad(WithValues({1, 2, 3}));
  auto *n3 = NodeWithKey(s, 3);
  s.PrepareWriters(1);
  auto w = s.MakeWriter(0);
  w.Tombstone(n3);
  EXPECT_TRUE(w.Overwrite(n3, ToHandle(77)));
  EXPECT_FALSE(w.Overwrite(n3, ToHandle(78)));
  s.Commit(w);
  EXPECT_FALSE(n3->deleted);
  EXPECT_EQ(n3->value, ToHandle(78));
  EXPECT_EQ(s.live_count(), 3U);
  EXPECT_EQ(s.update_count(), 1U);
}

TEST(NeedsRebuild, ThresholdExamples)
{
  EXPECT_EQ(RebuildThresholdFor(0.15, 100), 15U);
  EXPECT_EQ(RebuildThresholdFor(0.15, 16'000'000), 2'400'000U);
  EXPECT_EQ(RebuildThresholdFor(0.15, 0), 1U);

  std::vector<Key> keys(100);
  for (Key i = 0; i < 100; ++i) keys[i] = (i + 1) * 10;
  auto s = StorageLayer::BulkLoad(WithValues(keys));
  auto *node = s.head()->next;
  for (int i = 0; i < 14; ++i, node = node->next) s.Tombstone(node);
  EXPECT_EQ(s.update_count(), 14U);
  EXPECT_FALSE(s.NeedsRebuild());
  s.Tombstone(node);
  EXPECT_TRUE(s.NeedsRebuild());
}

/*######################################################################################
 * Properties
 *####################################################################################*/

TEST(StorageProperty, RandomOperationsMatchOrderedMap)
{
  std::mt19937_64 rng{21};
  for (int round = 0; round < 20; ++round) {
    auto keys = RandomKeys(200, rng(), 2000);
    auto s = StorageLayer::BulkLoad(WithValues(keys));
    std::map<Key, bool> oracle;
    for (const auto k : keys) oracle[k] = true;
    for (int op = 0; op < 500; ++op) {
      const auto key = static_cast<Key>(1 + rng() % 2000);
      auto *pred = WalkFrom(s.head(), key);
      if (rng() % 2 == 0) {
        if (pred->key != key) {
          const auto before = LinkedKeys(s);
          s.InsertAfter(pred, key, ToHandle(key), 1);
          oracle[key] = true;
          auto after = LinkedKeys(s);
          after.erase(std::find(after.begin(), after.end(), key));
          ASSERT_EQ(before, after);
        }
      } else if (pred != s.head() && pred->key == key) {
        s.Tombstone(pred);
        oracle[key] = false;
      }
    }
    std::vector<Key> live;
    for (const auto *n = s.head()->next; n != nullptr; n = n->next) {
      if (!n->deleted) live.push_back(n->key);
    }
    std::vector<Key> expect;
    for (const auto &[k, alive] : oracle) {
      if (alive) expect.push_back(k);
    }
    ASSERT_EQ(live, expect);
    ASSERT_EQ(s.live_count(), expect.size());
    const auto linked = LinkedKeys(s);
    ASSERT_TRUE(std::is_sorted(linked.begin(), linked.end()));
    ASSERT_EQ(std::adjacent_find(linked.begin(), linked.end()), linked.end());
  }
}

TEST(SplitPoints, CutsIntoNearEqualRuns)
{
  auto s = StorageLayer::BulkLoad(WithValues(RandomKeys(10000, 8)));
  const auto ordered = s.SplitPoints(4);
  ASSERT_EQ(ordered.size(), 4U);
  EXPECT_EQ(ordered[0], s.head());
  s.InsertAfter(WalkFrom(s.head(), 5), 5, ToHandle(5), 1);
  const auto walked = s.SplitPoints(4);
  ASSERT_EQ(walked.size(), 4U);
  for (std::size_t i = 2; i < walked.size(); ++i) ASSERT_LT(walked[i - 1]->key, walked[i]->key);
}

TEST(Compact, DropsTombstonesAndResetsCounters)
{
  auto s = StorageLayer::BulkLoad(WithValues(RandomKeys(3000, 12)));
  std::vector<Key> live;
  std::size_t i = 0;
  for (auto *n = s.head()->next; n != nullptr; n = n->next, ++i) {
    if (i % 3 == 0) {
      s.Tombstone(n);
    } else {
      live.push_back(n->key);
    }
  }
  auto *head = s.head();
  const auto starts = s.SplitPoints(3);
  s.Compact(std::span<DataNode *const>{starts}, [](std::size_t n, const auto &fn) {
    for (std::size_t j = 0; j < n; ++j) fn(j);
  });
  EXPECT_EQ(s.head(), head);
  EXPECT_EQ(LinkedKeys(s), live);
  EXPECT_EQ(s.update_count(), 0U);
  EXPECT_EQ(s.base_size(), live.size());
  EXPECT_EQ(s.live_count(), live.size());
}
