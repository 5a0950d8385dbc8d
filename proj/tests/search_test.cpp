#include <gtest/gtest.h>

#include <random>

#include "piskip/search.hpp"
#include "test_util.hpp"

using namespace piskip;
using piskip::testing::BruteInterception;
using piskip::testing::RandomKeys;
using piskip::testing::WithValues;

TEST(LessEqualMask, VectorMatchesScalar)
{
  std::mt19937_64 rng{1};
  for (const std::size_t m : {2U, 3U, 4U, 5U, 8U, 12U, 16U}) {
    for (int round = 0; round < 2000; ++round) {
      std::vector<Key> keys(m);
      for (auto &k : keys) k = static_cast<Key>(rng());
      // include the top of the unsigned range to catch signed compares
      if (round % 3 == 0) keys[0] = kMaxKey;
      const auto q = static_cast<Key>(round % 5 == 0 ? keys[rng() % m] : rng());
      ASSERT_EQ(LessEqualMaskVector(keys, q), LessEqualMaskScalar(keys, q));
    }
  }
}

TEST(Traverse, ExhaustiveOnATinyLayer)
{
  const std::vector<Key> keys{3, 5, 8, 9, 12, 15, 16, 20};
  const std::vector<std::uint8_t> heights{2, 1, 3, 2, 1, 4, 2, 2};
  const auto s = StorageLayer::BulkLoad(WithValues(keys), heights);
  for (const std::size_t m : {2U, 3U, 4U}) {
    const auto index = IndexLayer::Build(s, IndexOptions{.keys_per_entry = m});
    for (Key q = 0; q <= 25; ++q) {
      ASSERT_EQ(TraverseScalar(index, q), BruteInterception(s, q)) << "m=" << m << " q=" << q;
      ASSERT_EQ(TraverseVector(index, q), BruteInterception(s, q));
    }
  }
}

TEST(Traverse, ScalarVectorAndBruteForceAgree)
{
  const auto s = StorageLayer::BulkLoad(WithValues(RandomKeys(100000, 2)));
  const auto index = IndexLayer::Build(s, {});
  std::mt19937_64 rng{2};
  for (int i = 0; i < 2000; ++i) {
    const auto q = static_cast<Key>(rng());
    const auto *expect = BruteInterception(s, q);
    ASSERT_EQ(TraverseScalar(index, q), expect);
    ASSERT_EQ(TraverseVector(index, q), expect);
  }
  EXPECT_EQ(TraverseVector(index, kMaxKey), BruteInterception(s, kMaxKey));
  EXPECT_EQ(TraverseVector(index, 0), s.head());
}

TEST(Traverse, StatsCountOneEntryPerLevelAtLeast)
{
  const auto s = StorageLayer::BulkLoad(WithValues(RandomKeys(50000, 3)));
  const auto index = IndexLayer::Build(s, {});
  TraversalStats stats;
  for (Key q = 1; q < 1000; ++q) TraverseVector(index, q * 4000000U, &stats);
  EXPECT_EQ(stats.traversals, 999U);
  EXPECT_GE(stats.MeanEntries(), static_cast<double>(index.Height() - 1));
  std::uint64_t per_level = 0;
  for (const auto c : stats.entries_per_level) per_level += c;
  EXPECT_EQ(per_level, stats.entries);
}

TEST(TraverseGroup, MatchesSingleTraversals)
{
  const auto s = StorageLayer::BulkLoad(WithValues(RandomKeys(30000, 4)));
  const auto index = IndexLayer::Build(s, {});
  auto queries = RandomKeys(5000, 5);
  // duplicates are allowed in a batch
  queries.insert(queries.end(), queries.begin(), queries.begin() + 100);
  std::sort(queries.begin(), queries.end());
  for (const std::size_t g : {1U, 2U, 7U, 16U, 64U, 10000U}) {
    std::vector<Interception> out(queries.size());
    TraversalStats group_stats;
    TraverseGroup(index, queries, g, out, &group_stats);
    TraversalStats single_stats;
    for (std::size_t i = 0; i < queries.size(); ++i) {
      ASSERT_EQ(out[i], TraverseVector(index, queries[i], &single_stats)) << "g=" << g;
    }
    EXPECT_EQ(group_stats.entries, single_stats.entries);
  }
}

TEST(TraverseGroup, EmptyAndSizeMismatch)
{
  const auto s = StorageLayer::BulkLoad(WithValues({1, 2, 3}));
  const auto index = IndexLayer::Build(s, {});
  std::vector<Interception> none;
  EXPECT_NO_THROW(TraverseGroup(index, {}, 16, none));
  const std::vector<Key> one{2};
  EXPECT_ANY_THROW(TraverseGroup(index, one, 16, none));
}

TEST(TraverseProperty, InterceptionIsMonotoneInTheKey)
{
  const auto s = StorageLayer::BulkLoad(WithValues(RandomKeys(20000, 6)));
  const auto index = IndexLayer::Build(s, {});
  const auto queries = RandomKeys(20000, 7);
  std::vector<Interception> out(queries.size());
  TraverseGroup(index, queries, kDefaultGroupSize, out);
  for (std::size_t i = 1; i < out.size(); ++i) {
    ASSERT_LE(out[i - 1]->key, out[i]->key);
    ASSERT_LE(out[i]->key, queries[i]);
  }
}

TEST(TraverseProperty, TombstonedInterceptionsStillRoute)
{
  // the index is only refreshed by rebuilds, so a tombstoned node may still intercept
  auto s = StorageLayer::BulkLoad(WithValues(RandomKeys(5000, 8, 100000)));
  const auto index = IndexLayer::Build(s, {});
  auto *victim = TraverseScalar(index, 50000);
  ASSERT_NE(victim, s.head());
  s.Tombstone(victim);
  EXPECT_EQ(TraverseVector(index, 50000), victim);
  EXPECT_LE(WalkFrom(victim, 50000)->key, 50000U);
}
