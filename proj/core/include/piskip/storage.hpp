#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "piskip/types.hpp"

namespace piskip
{
/*######################################################################################
 * Data nodes
 *####################################################################################*/

/**
 * @brief An element of the storage layer.
 *
 * `key` and `height` never change after creation. `value`, `deleted`, and `next` are
 * the mutable fields; within a batch each node's mutable fields are touched by exactly
 * one worker.
 */
struct DataNode {
  Key key{};
  std::uint8_t height{1};
  bool deleted{false};
  ValueHandle value{};
  DataNode *next{nullptr};
};

/// Chunked node allocator owned by a single writer at a time.
class NodeArena
{
 public:
  static constexpr std::size_t kChunkNodes = 4096;

  NodeArena() = default;
  NodeArena(const NodeArena &) = delete;
  NodeArena(NodeArena &&) noexcept = default;
  auto operator=(const NodeArena &) -> NodeArena & = delete;
  auto operator=(NodeArena &&) noexcept -> NodeArena & = default;
  ~NodeArena() = default;

  auto New(Key key, ValueHandle value, std::uint8_t height) -> DataNode *;

  /// The i-th node handed out by this arena.
  [[nodiscard]] auto At(std::size_t i) const -> DataNode *;

  [[nodiscard]] auto
  size() const  //
      -> std::size_t
  {
    return size_;
  }

  [[nodiscard]] auto
  bytes() const  //
      -> std::size_t
  {
    return chunks_.size() * kChunkNodes * sizeof(DataNode);
  }

 private:
  std::vector<std::unique_ptr<DataNode[]>> chunks_{};
  std::size_t size_{0};
};

/*######################################################################################
 * Heights
 *####################################################################################*/

/// Height cap: ceil(-log_P(capacity)) + 2, and 1 when P = 0.
auto MaxHeightFor(double elevation_prob, std::uint64_t capacity) -> std::uint8_t;

/**
 * @brief Geometric height source: Pr[h] = P^(h-1) (1-P), capped.
 *
 * Heights are a pure function of (seed, key), which keeps index shapes identical no
 * matter which worker happens to insert a key.
 */
class HeightGenerator
{
 public:
  HeightGenerator(double elevation_prob, std::uint64_t seed, std::uint8_t max_height);

  [[nodiscard]] auto Draw(Key key) const -> std::uint8_t;

  [[nodiscard]] auto
  max_height() const  //
      -> std::uint8_t
  {
    return max_height_;
  }

 private:
  double prob_;
  std::uint64_t seed_;
  std::uint8_t max_height_;
};

/*######################################################################################
 * Instrumentation hooks
 *####################################################################################*/

/// Counts nodes touched by a storage-layer walk, start node included.
struct WalkStats {
  std::uint64_t walks{0};
  std::uint64_t nodes{0};
};

/// One access to a node's mutable fields, recorded for the ownership witness.
struct NodeAccess {
  const DataNode *node;
  bool write;
};
using AccessLog = std::vector<NodeAccess>;

/**
 * @brief Predecessor walk: the node with the largest key <= `key`, tombstones included.
 *
 * @pre start->key <= key
 */
inline auto
WalkFrom(DataNode *start, const Key key, WalkStats *stats = nullptr, AccessLog *log = nullptr)
    -> DataNode *
{
  auto *node = start;
  std::uint64_t touched = 1;
  while (true) {
    if (log != nullptr) log->push_back({node, false});
    auto *next = node->next;
    if (next == nullptr || next->key > key) break;
    node = next;
    ++touched;
  }
  if (stats != nullptr) {
    ++stats->walks;
    stats->nodes += touched;
  }
  return node;
}

/*######################################################################################
 * Storage layer
 *####################################################################################*/

struct StorageOptions {
  /// Probability that a key is also present one level up.
  double elevation_prob{0.25};
  std::uint64_t seed{1};
  /// Rebuild once inserts + deletes reach this fraction of the size at the last rebuild.
  double rebuild_ratio{0.15};
  /// Expected maximum node count; only used to cap heights.
  std::uint64_t capacity{std::uint64_t{1} << 32};
};

/// max(1, ceil(ratio * base)): updates that trigger a rebuild.
auto RebuildThresholdFor(double ratio, std::uint64_t base) -> std::uint64_t;

/**
 * @brief The bottom level: a key-sorted singly linked list of data nodes behind a
 * permanent sentinel.
 *
 * Not internally synchronized. Concurrent mutation goes through per-worker Writers,
 * each allocating from its own arena, whose counters are merged by Commit().
 */
class StorageLayer
{
 public:
  class Writer;

  explicit StorageLayer(StorageOptions options = {});

  StorageLayer(const StorageLayer &) = delete;
  StorageLayer(StorageLayer &&) noexcept = default;
  auto operator=(const StorageLayer &) -> StorageLayer & = delete;
  auto operator=(StorageLayer &&) noexcept -> StorageLayer & = default;
  ~StorageLayer() = default;

  /**
   * @brief Build a storage layer from strictly sorted pairs.
   *
   * @throws std::invalid_argument on unsorted or duplicate keys or the reserved key.
   */
  static auto BulkLoad(std::span<const std::pair<Key, ValueHandle>> pairs,
                       StorageOptions options = {}) -> StorageLayer;

  /// As above with explicit heights (clamped to the height cap), for fixed shapes.
  static auto BulkLoad(std::span<const std::pair<Key, ValueHandle>> pairs,
                       std::span<const std::uint8_t> heights, StorageOptions options = {})
      -> StorageLayer;

  [[nodiscard]] auto
  head() const  //
      -> DataNode *
  {
    return head_;
  }

  [[nodiscard]] auto
  options() const  //
      -> const StorageOptions &
  {
    return options_;
  }

  [[nodiscard]] auto
  heights() const  //
      -> const HeightGenerator &
  {
    return heights_;
  }

  [[nodiscard]] auto
  live_count() const  //
      -> std::uint64_t
  {
    return live_count_;
  }

  /// Linked non-sentinel nodes, tombstones included.
  [[nodiscard]] auto
  node_count() const  //
      -> std::uint64_t
  {
    return node_count_;
  }

  [[nodiscard]] auto
  update_count() const  //
      -> std::uint64_t
  {
    return update_count_;
  }

  [[nodiscard]] auto
  base_size() const  //
      -> std::uint64_t
  {
    return base_size_;
  }

  /// Number of structural updates that triggers a rebuild (at least 1).
  [[nodiscard]] auto RebuildThreshold() const -> std::uint64_t;

  [[nodiscard]] auto
  NeedsRebuild() const  //
      -> bool
  {
    return update_count_ >= RebuildThreshold();
  }

  /// Make writer slots [0, n) available. Call between batches only.
  void PrepareWriters(std::size_t n);

  [[nodiscard]] auto MakeWriter(std::size_t slot, AccessLog *log = nullptr) -> Writer;

  /// Fold a writer's counters into the layer. Call after the writer's phase ended.
  void Commit(Writer &writer);

  /// Single-threaded conveniences using writer slot 0.
  auto InsertAfter(DataNode *pred, Key key, ValueHandle value, std::uint8_t height)
      -> DataNode *;
  void Tombstone(DataNode *node);

  /**
   * @brief Up to `parts` nodes splitting the list into runs of near-equal node count.
   *
   * The first element is always the head. Uses arena arithmetic when the layout is
   * known to be in key order, otherwise walks the list once.
   */
  [[nodiscard]] auto SplitPoints(std::size_t parts) const -> std::vector<DataNode *>;

  /**
   * @brief Physically drop tombstoned nodes, copying live nodes into fresh arenas.
   *
   * Segment i runs from `starts[i]` (inclusive) to `starts[i+1]` (exclusive); each
   * segment is copied by one call of `run(i)`, so callers may execute them in parallel.
   * Resets update_count and sets base_size to the new live count.
   */
  template <class ParallelRun>
  void Compact(std::span<DataNode *const> starts, ParallelRun &&run);

  /// Memory held by node arenas.
  [[nodiscard]] auto ArenaBytes() const -> std::size_t;

 private:
  void CompactSegment(DataNode *from, const DataNode *until, NodeArena &out,
                      DataNode *&first, DataNode *&last, std::size_t &count) const;
  void FinishCompaction(std::vector<NodeArena> arenas, std::vector<DataNode *> firsts,
                        std::vector<DataNode *> lasts, std::vector<std::size_t> counts);

  StorageOptions options_;
  HeightGenerator heights_;
  /// Owns the sentinel; its address is stable for the lifetime of the layer.
  std::unique_ptr<DataNode> sentinel_;
  DataNode *head_{nullptr};
  /// Nodes from bulk load or compaction, in key order across arenas.
  std::vector<std::unique_ptr<NodeArena>> data_arenas_{};
  /// One arena per writer slot, for inserted nodes.
  std::vector<std::unique_ptr<NodeArena>> writer_arenas_{};
  std::uint64_t live_count_{0};
  std::uint64_t node_count_{0};
  std::uint64_t update_count_{0};
  std::uint64_t base_size_{0};
  /// True while data_arenas_ hold every linked node in key order.
  bool ordered_{true};
};

/**
 * @brief Per-worker mutation handle.
 *
 * Counters are local until StorageLayer::Commit, so concurrent writers never share a
 * cache line of bookkeeping.
 */
class StorageLayer::Writer
{
 public:
  /**
   * @brief Link a new node directly after `pred`; the index layer is not touched.
   *
   * @throws CorruptionError unless pred->key < key < pred->next->key.
   */
  auto InsertAfter(DataNode *pred, Key key, ValueHandle value, std::uint8_t height)
      -> DataNode *;

  /// Set the deleted flag; only a live -> deleted transition counts as an update.
  void Tombstone(DataNode *node);

  /// Overwrite the value and clear the deleted flag; returns true if it was deleted.
  auto Overwrite(DataNode *node, ValueHandle value) -> bool;

  [[nodiscard]] auto
  log() const  //
      -> AccessLog *
  {
    return log_;
  }

 private:
  friend class StorageLayer;

  Writer(StorageLayer *owner, NodeArena *arena, AccessLog *log)
      : owner_{owner}, arena_{arena}, log_{log}
  {
  }

  StorageLayer *owner_;
  NodeArena *arena_;
  AccessLog *log_;
  std::int64_t live_delta_{0};
  std::uint64_t inserted_{0};
  std::uint64_t updates_{0};
};

/*######################################################################################
 * Template definitions
 *####################################################################################*/

template <class ParallelRun>
void
StorageLayer::Compact(std::span<DataNode *const> starts, ParallelRun &&run)
{
  const auto n = starts.size();
  std::vector<NodeArena> arenas(n);
  std::vector<DataNode *> firsts(n, nullptr);
  std::vector<DataNode *> lasts(n, nullptr);
  std::vector<std::size_t> counts(n, 0);
  run(n, [&](const std::size_t i) {
    // the sentinel itself is re-created by FinishCompaction
    auto *from = (i == 0) ? starts[0]->next : starts[i];
    const DataNode *until = (i + 1 < n) ? starts[i + 1] : nullptr;
    CompactSegment(from, until, arenas[i], firsts[i], lasts[i], counts[i]);
  });
  FinishCompaction(std::move(arenas), std::move(firsts), std::move(lasts),
                   std::move(counts));
}

}  // namespace piskip
