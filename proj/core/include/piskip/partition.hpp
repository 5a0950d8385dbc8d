#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "piskip/pipeline.hpp"
#include "piskip/types.hpp"
#include "piskip/worker_pool.hpp"

namespace piskip
{
/*######################################################################################
 * Thread allocation
 *####################################################################################*/

/**
 * @brief Per-round split of the thread budget.
 *
 * `workers[p]` threads process partition p's queries. Of those, `hosted_at_owner[p]`
 * run on p itself and the rest are remote threads placed on other partitions when p
 * would exceed its capacity. `hosted[p]` counts every thread running on p.
 */
struct ThreadAllocation {
  std::vector<std::size_t> workers{};
  std::vector<std::size_t> hosted_at_owner{};
  std::vector<std::size_t> hosted{};
  /// (owner, host) for every remote thread.
  std::vector<std::pair<std::size_t, std::size_t>> offloads{};
};

/**
 * @brief Largest-remainder proportional split of `budget` threads over `loads`.
 *
 * Every partition with a non-zero load gets at least one thread; ties are broken by
 * partition id. Scaling all loads by the same factor gives the same split. A
 * `capacity` of 0 means unlimited.
 *
 * @throws ConfigError if budget < number of non-empty partitions or budget exceeds
 *         capacity times the partition count.
 */
auto AllocateThreads(std::span<const std::uint64_t> loads, std::size_t budget,
                     std::size_t capacity = 0) -> ThreadAllocation;

/// Load-blind split used when self-adjusted threading is off.
auto EvenThreads(std::span<const std::uint64_t> loads, std::size_t budget,
                 std::size_t capacity = 0) -> ThreadAllocation;

/*######################################################################################
 * Partition sets
 *####################################################################################*/

struct PartitionOptions {
  std::size_t partitions{1};
  std::size_t thread_budget{1};
  /// Threads a partition may host; 0 means unlimited.
  std::size_t capacity{0};
  /// Proportional thread allocation per round (otherwise an even split).
  bool self_adjust{true};
  /// Pin each worker to CPU (partition id mod CPU count) while it serves a partition.
  bool affinity{false};
  /// Record node accesses and check disjoint ownership in every batch.
  bool witness{false};
  ShardOptions shard{};
};

/// Per-round report of one Process/ProcessRanges call.
struct RoundStats {
  std::vector<std::uint64_t> loads{};
  ThreadAllocation allocation{};
  std::uint64_t offloaded_queries{0};
  std::uint64_t rebuilds{0};
  OwnershipReport ownership{};
  TraversalStats traversal{};
  WalkStats walk{};
};

struct Partition {
  /// Inclusive lower key bound.
  Key lo{};
  /// Exclusive upper bound; 2^32 for the last partition.
  std::uint64_t hi{};
  std::optional<std::size_t> affinity_hint{};
  Shard shard;
};

/**
 * @brief Disjoint key-range shards, each with its own storage and index layers.
 *
 * Boundaries are fixed at load time. A round routes a query set, allocates threads and
 * runs every partition's batch concurrently in one pool dispatch.
 */
class PartitionSet
{
 public:
  /// Split sorted pairs into contiguous ranges of equal cardinality.
  static auto Create(std::span<const std::pair<Key, ValueHandle>> pairs,
                     PartitionOptions options, WorkerPool *pool = nullptr) -> PartitionSet;

  [[nodiscard]] auto
  size() const  //
      -> std::size_t
  {
    return parts_.size();
  }

  [[nodiscard]] auto
  partition(const std::size_t p) const  //
      -> const Partition &
  {
    return parts_[p];
  }

  [[nodiscard]] auto
  partition(const std::size_t p)  //
      -> Partition &
  {
    return parts_[p];
  }

  [[nodiscard]] auto
  options() const  //
      -> const PartitionOptions &
  {
    return options_;
  }

  void
  set_thread_budget(const std::size_t budget)
  {
    options_.thread_budget = budget;
  }

  void
  set_self_adjust(const bool on)
  {
    options_.self_adjust = on;
  }

  /// Partition whose range contains `key`.
  [[nodiscard]] auto PartitionOf(Key key) const -> std::size_t;

  /**
   * @brief Split a query set at partition boundaries.
   *
   * Range searches straddling a boundary become one clipped range per partition, all
   * carrying the original seq.
   */
  [[nodiscard]] auto Route(const QuerySet &qs) const -> std::vector<QuerySet>;

  /// Point queries: route, allocate, process every partition concurrently, merge by seq.
  auto Process(const QuerySet &qs, WorkerPool &pool, RoundStats *stats = nullptr)
      -> std::vector<QueryResult>;

  /// Range searches; pieces from several partitions are concatenated in key order.
  auto ProcessRanges(const QuerySet &qs, WorkerPool &pool, RoundStats *stats = nullptr)
      -> std::vector<QueryResult>;

  /// Live pairs of all partitions in key order.
  [[nodiscard]] auto LivePairs() const -> std::vector<std::pair<Key, ValueHandle>>;

  [[nodiscard]] auto TotalRebuilds() const -> std::uint64_t;
  [[nodiscard]] auto TotalRebuildSeconds() const -> double;
  [[nodiscard]] auto IndexBytes() const -> std::size_t;

 private:
  [[nodiscard]] auto Allocate(std::span<const std::uint64_t> loads) const -> ThreadAllocation;

  PartitionOptions options_{};
  std::vector<Partition> parts_{};
};

}  // namespace piskip
