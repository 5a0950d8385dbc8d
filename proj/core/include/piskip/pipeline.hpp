#pragma once

#include <atomic>
#include <barrier>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "piskip/index_layer.hpp"
#include "piskip/search.hpp"
#include "piskip/storage.hpp"
#include "piskip/types.hpp"
#include "piskip/worker_pool.hpp"

namespace piskip
{
/*######################################################################################
 * Shard: one storage layer with its index layer
 *####################################################################################*/

struct ShardOptions {
  StorageOptions storage{};
  std::size_t keys_per_entry{4};
  std::size_t group_size{kDefaultGroupSize};
  /// Check the rebuild threshold after every batch.
  bool auto_rebuild{true};
};

/**
 * @brief A self-contained index instance: storage layer, index layer and the rebuild
 * bookkeeping that ties them together.
 */
class Shard
{
 public:
  explicit Shard(ShardOptions options = {});

  static auto Load(std::span<const std::pair<Key, ValueHandle>> pairs, ShardOptions options,
                   std::size_t build_workers = 1, WorkerPool *pool = nullptr) -> Shard;

  [[nodiscard]] auto
  storage()  //
      -> StorageLayer &
  {
    return storage_;
  }

  [[nodiscard]] auto
  storage() const  //
      -> const StorageLayer &
  {
    return storage_;
  }

  [[nodiscard]] auto
  index() const  //
      -> const IndexLayer &
  {
    return index_;
  }

  [[nodiscard]] auto
  options() const  //
      -> const ShardOptions &
  {
    return options_;
  }

  /// Rebuild if the update threshold was reached; returns whether it ran.
  auto MaybeRebuild(std::size_t workers, WorkerPool *pool) -> bool;

  /// Unconditional rebuild.
  void Rebuild(std::size_t workers, WorkerPool *pool);

  [[nodiscard]] auto
  rebuilds() const  //
      -> std::uint64_t
  {
    return rebuilds_;
  }

  [[nodiscard]] auto
  rebuild_seconds() const  //
      -> double
  {
    return rebuild_seconds_;
  }

  /// Live (key, value) pairs in key order.
  [[nodiscard]] auto LivePairs() const -> std::vector<std::pair<Key, ValueHandle>>;

 private:
  ShardOptions options_;
  StorageLayer storage_;
  IndexLayer index_{};
  std::uint64_t rebuilds_{0};
  double rebuild_seconds_{0.0};
};

/*######################################################################################
 * Worker batches and the pipeline steps
 *####################################################################################*/

/// The key-sorted slice of a query set owned by one worker.
struct WorkerBatch {
  std::size_t worker_id{0};
  std::vector<Query> queries{};
  /// Parallel to `queries` once traversal ran.
  std::vector<Interception> interceptions{};

  [[nodiscard]] auto
  FirstInterception() const  //
      -> Interception
  {
    return interceptions.empty() ? nullptr : interceptions.front();
  }
};

/// Even contiguous split: the first N mod n_workers slices get one extra query.
auto PartitionQueries(const QuerySet &qs, std::size_t n_workers) -> std::vector<WorkerBatch>;

/// Fill `batch.interceptions` with grouped traversal.
void TraverseBatch(const IndexLayer &index, WorkerBatch &batch, std::size_t group_size,
                   TraversalStats *stats = nullptr);

/**
 * @brief One worker's step of the hand-right cascade.
 *
 * Prepends `incoming` (queries handed over by the left neighbour), then detaches every
 * trailing query whose interception is `next_first` (the first interception of the
 * nearest non-empty worker to the right) and returns them for the right neighbour.
 */
auto RedistributeStep(WorkerBatch &self, WorkerBatch incoming, Interception next_first)
    -> WorkerBatch;

/// Whole cascade in worker-id order; the sequential form of the neighbour messages.
auto Redistribute(std::vector<WorkerBatch> batches) -> std::vector<WorkerBatch>;

struct ExecuteStats {
  WalkStats walk{};
};

/**
 * @brief Run one redistributed batch against the storage layer.
 *
 * Queries are walked from their interception (or from the previous query's node when
 * that is further right). Inserts draw a fresh height but leave the index untouched.
 *
 * @throws CorruptionError if a walk would start right of its query key.
 */
auto ExecuteBatch(const WorkerBatch &batch, StorageLayer::Writer &writer,
                  const StorageLayer &storage, ExecuteStats *stats = nullptr)
    -> std::vector<QueryResult>;

/*######################################################################################
 * Ownership witness
 *####################################################################################*/

struct OwnershipReport {
  std::uint64_t accesses{0};
  std::uint64_t nodes_touched{0};
  /// Nodes whose mutable fields were written by more than one worker.
  std::uint64_t multi_writer_nodes{0};
  /// Nodes written by one worker and read by another in the same phase.
  std::uint64_t read_write_overlaps{0};

  [[nodiscard]] auto
  Clean() const  //
      -> bool
  {
    return multi_writer_nodes == 0 && read_write_overlaps == 0;
  }

  void
  Merge(const OwnershipReport &o)
  {
    accesses += o.accesses;
    nodes_touched += o.nodes_touched;
    multi_writer_nodes += o.multi_writer_nodes;
    read_write_overlaps += o.read_write_overlaps;
  }
};

/// Analyse per-worker access logs from one execution phase (at most 64 workers).
auto CheckOwnership(std::span<const AccessLog> logs) -> OwnershipReport;

/*######################################################################################
 * Batch runs
 *####################################################################################*/

struct BatchOptions {
  /// Record node accesses during execution and check disjoint ownership.
  bool witness{false};
  /// Optional instrumentation sinks (filled after Finish()).
  TraversalStats *traversal{nullptr};
  WalkStats *walk{nullptr};
  /// Called by each worker right after its traversal; exceptions abort the batch.
  std::function<void(std::size_t)> after_traversal{};
};

/**
 * @brief One bulk-synchronous batch over a shard.
 *
 * Work(w) must be called concurrently by exactly `workers()` threads; it performs
 * traversal, a barrier, the neighbour cascade and execution. Finish() is called once
 * all Work() calls returned. Traversal and redistribution have no side effects, so a
 * failure in them aborts the batch before any node is touched.
 */
class BatchRun
{
 public:
  BatchRun(const QuerySet &qs, Shard &shard, std::size_t workers, BatchOptions options = {});

  BatchRun(const BatchRun &) = delete;
  BatchRun(BatchRun &&) = delete;
  auto operator=(const BatchRun &) -> BatchRun & = delete;
  auto operator=(BatchRun &&) -> BatchRun & = delete;
  ~BatchRun() = default;

  [[nodiscard]] auto
  workers() const  //
      -> std::size_t
  {
    return batches_.size();
  }

  void Work(std::size_t worker);

  /// Commit writers, merge results in seq order; rethrows a worker failure.
  auto Finish() -> std::vector<QueryResult>;

  /// Query counts per worker after redistribution.
  [[nodiscard]] auto FinalBatchSizes() const -> std::vector<std::size_t>;

  /// First interception per worker after redistribution (nullptr when empty).
  [[nodiscard]] auto FirstInterceptions() const -> std::vector<Interception>;

  [[nodiscard]] auto
  ownership() const  //
      -> const OwnershipReport &
  {
    return ownership_;
  }

 private:
  void Fail(std::exception_ptr error);

  Shard &shard_;
  BatchOptions options_;
  std::vector<WorkerBatch> batches_;
  std::vector<Interception> original_first_;
  std::vector<WorkerBatch> inbox_;
  std::unique_ptr<std::atomic<bool>[]> delivered_;
  std::barrier<> traversed_;
  std::atomic<bool> failed_{false};
  std::exception_ptr error_{};
  std::atomic_flag error_lock_ = ATOMIC_FLAG_INIT;
  std::vector<StorageLayer::Writer> writers_;
  std::vector<AccessLog> logs_;
  std::vector<TraversalStats> traversal_stats_;
  std::vector<ExecuteStats> execute_stats_;
  std::vector<std::vector<QueryResult>> results_;
  OwnershipReport ownership_{};
};

/**
 * @brief Process one point-query set: partition, traverse, redistribute, execute.
 *
 * Results come back in seq order. The rebuild threshold is checked afterwards.
 *
 * @throws std::invalid_argument for range searches (see ProcessRangeBatch).
 */
auto ProcessBatch(const QuerySet &qs, Shard &shard, std::size_t workers, WorkerPool *pool,
                  BatchOptions options = {}) -> std::vector<QueryResult>;

/*######################################################################################
 * Range queries
 *####################################################################################*/

/// A (possibly clipped) piece of a range search.
struct RangePiece {
  Key lo{};
  Key hi{};
  /// True for pieces cut at the next worker's first interception.
  bool hi_exclusive{false};
  /// Index of the originating query in the sorted range list.
  std::size_t origin{};
  Interception start{nullptr};
};

/// Cascade step for ranges: clip every piece reaching `next_first` and hand the rest on.
auto RedistributeRangeStep(std::vector<RangePiece> &self, std::vector<RangePiece> incoming,
                           Interception next_first) -> std::vector<RangePiece>;

/// Scan one piece: live pairs in [lo, hi] (or [lo, hi) when clipped).
auto ScanPiece(const RangePiece &piece, const StorageLayer &storage, WalkStats *stats = nullptr)
    -> std::vector<std::pair<Key, ValueHandle>>;

/// Range counterpart of BatchRun; read-only, so no writers and no rebuild check.
class RangeRun
{
 public:
  RangeRun(std::span<const Query> ranges, Shard &shard, std::size_t workers);

  RangeRun(const RangeRun &) = delete;
  RangeRun(RangeRun &&) = delete;
  auto operator=(const RangeRun &) -> RangeRun & = delete;
  auto operator=(RangeRun &&) -> RangeRun & = delete;
  ~RangeRun() = default;

  [[nodiscard]] auto
  workers() const  //
      -> std::size_t
  {
    return pieces_.size();
  }

  void Work(std::size_t worker);

  auto Finish() -> std::vector<QueryResult>;

  /// Pieces per worker after redistribution.
  [[nodiscard]] auto FinalPieceCounts() const -> std::vector<std::size_t>;

 private:
  void Fail(std::exception_ptr error);

  Shard &shard_;
  std::vector<Query> sorted_;
  std::vector<std::vector<RangePiece>> pieces_;
  std::vector<Interception> original_first_;
  std::vector<std::vector<RangePiece>> inbox_;
  std::unique_ptr<std::atomic<bool>[]> delivered_;
  std::barrier<> traversed_;
  std::atomic<bool> failed_{false};
  std::exception_ptr error_{};
  std::atomic_flag error_lock_ = ATOMIC_FLAG_INIT;
  /// (origin, hits) per piece, per worker.
  std::vector<std::vector<std::pair<std::size_t, std::vector<std::pair<Key, ValueHandle>>>>>
      hits_;
};

/**
 * @brief Process a set of range searches; results in seq order.
 *
 * Pieces of one range split across workers are concatenated in key order.
 */
auto ProcessRangeBatch(std::span<const Query> ranges, Shard &shard, std::size_t workers,
                       WorkerPool *pool) -> std::vector<QueryResult>;

}  // namespace piskip
