#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "piskip/partition.hpp"
#include "piskip/workload.hpp"
#include "test_util.hpp"

using namespace piskip;
using piskip::testing::RandomKeys;
using piskip::testing::WithValues;

namespace
{
auto
Workers(const std::vector<std::uint64_t> &loads, const std::size_t budget,
        const std::size_t capacity = 0)  //
    -> std::vector<std::size_t>
{
  return AllocateThreads(loads, budget, capacity).workers;
}

auto
MixedBatch(std::mt19937_64 &rng, const std::size_t n, const Key key_space)  //
    -> QuerySet
{
  std::vector<Query> qs;
  for (std::uint64_t seq = 0; seq < n; ++seq) {
    const auto key = static_cast<Key>(1 + rng() % key_space);
    switch (rng() % 3) {
      case 0:
        qs.push_back(Query::Search(key, seq));
        break;
      case 1:
        qs.push_back(Query::Insert(key, ToHandle(rng() | 1U), seq));
        break;
      default:
        qs.push_back(Query::Delete(key, seq));
    }
  }
  return MakeQuerySet(std::move(qs));
}

}  // namespace

/*######################################################################################
 * Thread allocation
 *####################################################################################*/

TEST(AllocateThreads, ProportionalExamples)
{
  EXPECT_EQ(Workers({1, 1, 1, 1}, 8), (std::vector<std::size_t>{2, 2, 2, 2}));
  EXPECT_EQ(Workers({36, 26, 22, 16}, 8), (std::vector<std::size_t>{3, 2, 2, 1}));
  EXPECT_EQ(Workers({4, 2, 1, 1}, 8), (std::vector<std::size_t>{4, 2, 1, 1}));
  EXPECT_EQ(Workers({10, 0, 0, 0}, 4), (std::vector<std::size_t>{4, 0, 0, 0}));
  EXPECT_EQ(Workers({0, 0, 0}, 3), (std::vector<std::size_t>{1, 1, 1}));
  // ties in the remainder go to the lower id
  EXPECT_EQ(Workers({1, 1, 1}, 4), (std::vector<std::size_t>{2, 1, 1}));
}

TEST(AllocateThreads, EveryLoadedPartitionGetsAThread)
{
  EXPECT_EQ(Workers({100, 1, 1, 1}, 4), (std::vector<std::size_t>{1, 1, 1, 1}));
  EXPECT_EQ(Workers({100, 1, 1, 1}, 6), (std::vector<std::size_t>{3, 1, 1, 1}));
}

TEST(AllocateThreads, RejectsUnusableBudgets)
{
  EXPECT_THROW(Workers({1, 1, 1}, 2), ConfigError);
  EXPECT_THROW(Workers({1, 1, 1, 1}, 13, 3), ConfigError);
  EXPECT_NO_THROW(Workers({1, 1, 1, 1}, 12, 3));
  EXPECT_THROW(Workers({}, 1), ConfigError);
}

TEST(AllocateThreads, CapacityOverflowIsHostedElsewhere)
{
  const auto a = AllocateThreads(std::vector<std::uint64_t>{100, 1, 1, 1}, 8, 3);
  EXPECT_EQ(a.workers, (std::vector<std::size_t>{5, 1, 1, 1}));
  EXPECT_EQ(a.hosted_at_owner, (std::vector<std::size_t>{3, 1, 1, 1}));
  EXPECT_EQ(std::accumulate(a.hosted.begin(), a.hosted.end(), std::size_t{0}), 8U);
  for (const auto h : a.hosted) EXPECT_LE(h, 3U);
  ASSERT_EQ(a.offloads.size(), 2U);
  for (const auto &[owner, host] : a.offloads) {
    EXPECT_EQ(owner, 0U);
    EXPECT_NE(host, 0U);
  }
}

TEST(AllocateThreadsProperty, SumsScaleAndQuotas)
{
  std::mt19937_64 rng{1};
  for (int round = 0; round < 2000; ++round) {
    const auto n = 1 + rng() % 12;
    std::vector<std::uint64_t> loads(n);
    for (auto &l : loads) l = rng() % 5 == 0 ? 0 : rng() % 10000;
    const auto nonempty =
        static_cast<std::size_t>(std::count_if(loads.begin(), loads.end(), [](auto l) {
          return l > 0;
        }));
    const auto budget = std::max<std::size_t>(1, nonempty) + rng() % 40;
    const auto w = Workers(loads, budget);
    ASSERT_EQ(std::accumulate(w.begin(), w.end(), std::size_t{0}), budget);

    const auto total = std::accumulate(loads.begin(), loads.end(), std::uint64_t{0});
    bool all_quotas_at_least_one = true;
    for (std::size_t p = 0; p < n; ++p) {
      if (loads[p] > 0) ASSERT_GE(w[p], 1U);
      if (total > 0 && loads[p] > 0) {
        all_quotas_at_least_one &= static_cast<double>(loads[p]) * static_cast<double>(budget)
                                   >= static_cast<double>(total);
      }
    }
    if (total > 0 && all_quotas_at_least_one) {
      for (std::size_t p = 0; p < n; ++p) {
        const auto quota = static_cast<double>(loads[p]) * static_cast<double>(budget)
                           / static_cast<double>(total);
        ASSERT_LT(std::abs(static_cast<double>(w[p]) - quota), 1.0);
      }
    }

    auto scaled = loads;
    const auto k = 1 + rng() % 1000;
    for (auto &l : scaled) l *= k;
    ASSERT_EQ(Workers(scaled, budget), w);
  }
}

TEST(EvenThreads, IgnoresLoads)
{
  const auto a = EvenThreads(std::vector<std::uint64_t>{100, 1, 1, 1}, 8);
  EXPECT_EQ(a.workers, (std::vector<std::size_t>{2, 2, 2, 2}));
}

/*######################################################################################
 * Partition sets
 *####################################################################################*/

TEST(PartitionSet, SinglePartitionCoversTheKeySpace)
{
  const auto set = PartitionSet::Create(WithValues(RandomKeys(100, 1)), {});
  ASSERT_EQ(set.size(), 1U);
  EXPECT_EQ(set.partition(0).lo, 0U);
  EXPECT_EQ(set.partition(0).hi, std::uint64_t{1} << 32U);
  EXPECT_EQ(set.PartitionOf(kMaxKey), 0U);
}

TEST(PartitionSet, EqualCardinalityBoundaries)
{
  std::vector<Key> keys(100);
  std::iota(keys.begin(), keys.end(), 1);
  const auto pairs = WithValues(keys);
  PartitionOptions o;
  o.partitions = 4;
  o.thread_budget = 4;
  const auto set = PartitionSet::Create(pairs, o);
  for (std::size_t p = 0; p < 4; ++p) {
    EXPECT_EQ(set.partition(p).shard.storage().live_count(), 25U);
    if (p > 0) EXPECT_EQ(set.partition(p).lo, keys[p * 25]);
  }
  EXPECT_EQ(set.PartitionOf(0), 0U);
  EXPECT_EQ(set.PartitionOf(25), 0U);
  EXPECT_EQ(set.PartitionOf(26), 1U);
  EXPECT_EQ(set.PartitionOf(kMaxKey), 3U);
  EXPECT_EQ(set.LivePairs(), pairs);
}

TEST(PartitionSet, TinyInputsStillGetEveryPartition)
{
  PartitionOptions o;
  o.partitions = 8;
  o.thread_budget = 8;
  const auto set = PartitionSet::Create(WithValues({5, 9}), o);
  ASSERT_EQ(set.size(), 8U);
  for (std::size_t p = 1; p < 8; ++p) EXPECT_LT(set.partition(p - 1).lo, set.partition(p).lo);
  EXPECT_EQ(set.LivePairs(), WithValues({5, 9}));
  EXPECT_THROW(PartitionSet::Create({}, PartitionOptions{.partitions = 0}), ConfigError);
}

TEST(Route, SplitsPointQueriesAndClipsRanges)
{
  std::vector<Key> keys(100);
  std::iota(keys.begin(), keys.end(), 1);
  PartitionOptions o;
  o.partitions = 4;
  o.thread_budget = 4;
  const auto set = PartitionSet::Create(WithValues(keys), o);
  const auto routed = set.Route(MakeQuerySet({Query::Search(3, 0), Query::Search(26, 1),
                                              Query::Delete(99, 2), Query::Range(20, 60, 3)}));
  ASSERT_EQ(routed.size(), 4U);
  ASSERT_EQ(routed[0].size(), 2U);
  EXPECT_EQ(routed[0][1].upper, Key{25});
  ASSERT_EQ(routed[1].size(), 2U);
  // same lower key as the search, so seq order decides
  EXPECT_EQ(routed[1][1].type, QueryType::kRangeSearch);
  EXPECT_EQ(routed[1][1].key, 26U);
  EXPECT_EQ(routed[1][1].upper, Key{50});
  EXPECT_EQ(routed[1][1].seq, 3U);
  ASSERT_EQ(routed[2].size(), 1U);
  EXPECT_EQ(routed[2][0].key, 51U);
  EXPECT_EQ(routed[2][0].upper, Key{60});
  EXPECT_EQ(routed[3].size(), 1U);
}

TEST(Route, UniformWorkloadSpreadsEvenly)
{
  WorkloadSpec spec;
  spec.dataset_size = 1U << 16U;
  spec.batch_size = 8192;
  spec.seed = 3;
  const auto pairs = MakeDataset(spec.dataset_size);
  PartitionOptions o;
  o.partitions = 4;
  o.thread_budget = 4;
  const auto set = PartitionSet::Create(pairs, o);
  std::vector<Key> domain;
  for (const auto &[k, v] : pairs) domain.push_back(k);
  WorkloadGenerator gen{spec, domain};
  const auto routed = set.Route(gen.NextBatch());
  for (const auto &r : routed) {
    EXPECT_NEAR(static_cast<double>(r.size()), 2048.0, 0.05 * 2048.0);
  }
}

TEST(PartitionSet, ProcessMatchesOracleForAnyLayout)
{
  const auto pairs = WithValues(RandomKeys(4000, 7, 40000));
  WorkerPool pool{8};
  for (const std::size_t n : {1U, 2U, 3U, 4U, 8U}) {
    for (const bool self_adjust : {true, false}) {
      PartitionOptions o;
      o.partitions = n;
      o.thread_budget = 8;
      o.self_adjust = self_adjust;
      o.witness = true;
      o.shard.storage.rebuild_ratio = 0.05;
      auto set = PartitionSet::Create(pairs, o, &pool);
      OracleIndex oracle{pairs};
      std::mt19937_64 rng{n};
      for (int b = 0; b < 6; ++b) {
        // skew: most queries hit the lowest tenth of the key space
        auto qs = MixedBatch(rng, 2000, b % 2 == 0 ? 4000 : 40000);
        RoundStats stats;
        const auto got = set.Process(qs, pool, &stats);
        ASSERT_EQ(got, oracle.ApplyAll(qs)) << "n=" << n << " batch=" << b;
        EXPECT_TRUE(stats.ownership.Clean());
        EXPECT_EQ(std::accumulate(stats.loads.begin(), stats.loads.end(), std::uint64_t{0}),
                  qs.size());
        EXPECT_EQ(std::accumulate(stats.allocation.workers.begin(),
                                  stats.allocation.workers.end(), std::size_t{0}),
                  8U);
      }
      EXPECT_EQ(set.LivePairs(), oracle.LivePairs());
    }
  }
}

TEST(PartitionSet, CapacityOffloadStillMatchesOracle)
{
  const auto pairs = WithValues(RandomKeys(4000, 8, 40000));
  WorkerPool pool{8};
  PartitionOptions o;
  o.partitions = 4;
  o.thread_budget = 8;
  o.capacity = 3;
  o.witness = true;
  auto set = PartitionSet::Create(pairs, o, &pool);
  OracleIndex oracle{pairs};
  std::mt19937_64 rng{8};
  // every query lands in the first partition, which can host only 3 of its threads
  const auto qs = MixedBatch(rng, 3000, 5000);
  RoundStats stats;
  const auto got = set.Process(qs, pool, &stats);
  ASSERT_EQ(got, oracle.ApplyAll(qs));
  EXPECT_FALSE(stats.allocation.offloads.empty());
  EXPECT_GT(stats.offloaded_queries, 0U);
  EXPECT_TRUE(stats.ownership.Clean());
}

TEST(PartitionSet, RangesAcrossBoundariesMatchOracle)
{
  const auto pairs = WithValues(RandomKeys(5000, 9, 100000));
  WorkerPool pool{4};
  PartitionOptions o;
  o.partitions = 4;
  o.thread_budget = 4;
  auto set = PartitionSet::Create(pairs, o, &pool);
  OracleIndex oracle{pairs};
  std::mt19937_64 rng{9};
  std::vector<Query> ranges;
  for (std::uint64_t seq = 0; seq < 400; ++seq) {
    const auto lo = static_cast<Key>(rng() % 100000);
    ranges.push_back(Query::Range(lo, lo + static_cast<Key>(rng() % 40000), seq));
  }
  ranges.push_back(Query::Range(0, kMaxKey, 400));
  const auto qs = MakeQuerySet(ranges);
  ASSERT_EQ(set.ProcessRanges(qs, pool), oracle.ApplyAll(qs));
}
