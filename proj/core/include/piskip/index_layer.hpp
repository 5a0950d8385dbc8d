#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "piskip/storage.hpp"
#include "piskip/types.hpp"
#include "piskip/worker_pool.hpp"

namespace piskip
{
/*######################################################################################
 * Routing slots
 *####################################################################################*/

enum class SlotKind : std::uint8_t {
  kData = 0,  // a storage-layer node (only below level 1)
  kNext = 1,  // the next entry on the same level
  kDown = 2,  // an entry on the level below
};

/**
 * @brief A tagged successor reference stored in a routing table.
 *
 * Data nodes are 8-byte aligned, so the two low bits of a pointer are free to tag
 * entry indices.
 */
class Slot
{
 public:
  constexpr Slot() = default;

  static auto
  Data(DataNode *node)  //
      -> Slot
  {
    return Slot{reinterpret_cast<std::uintptr_t>(node)};
  }

  static constexpr auto
  Next(const std::size_t entry)  //
      -> Slot
  {
    return Slot{(static_cast<std::uintptr_t>(entry) << 2U) | 1U};
  }

  static constexpr auto
  Down(const std::size_t entry)  //
      -> Slot
  {
    return Slot{(static_cast<std::uintptr_t>(entry) << 2U) | 2U};
  }

  [[nodiscard]] constexpr auto
  kind() const  //
      -> SlotKind
  {
    return static_cast<SlotKind>(bits_ & 3U);
  }

  [[nodiscard]] constexpr auto
  entry() const  //
      -> std::size_t
  {
    return static_cast<std::size_t>(bits_ >> 2U);
  }

  [[nodiscard]] auto
  node() const  //
      -> DataNode *
  {
    return reinterpret_cast<DataNode *>(bits_);
  }

  friend constexpr auto operator==(Slot, Slot) -> bool = default;

 private:
  explicit constexpr Slot(const std::uintptr_t bits) : bits_{bits} {}

  std::uintptr_t bits_{0};
};

static_assert(alignof(DataNode) >= 4, "slot tagging needs two free pointer bits");

/*######################################################################################
 * Entries and levels
 *####################################################################################*/

/// Read-only view of one entry: M sorted keys plus its M+1 routing slots.
struct EntryView {
  std::span<const Key> keys;
  std::span<const Slot> slots;
};

/**
 * @brief One index level: entries packed contiguously, routing tables alongside.
 *
 * Keys are stored M per entry; the tail of the last entry is padded with kMaxKey.
 */
struct IndexLevel {
  std::vector<Key> keys{};
  std::vector<Slot> slots{};
  std::size_t key_count{0};
  std::size_t entry_count{0};
};

/// Decode a "keys <= query" lane mask into a routing count r in [0, M].
///
/// @throws CorruptionError when the mask is not of the form 0..01..1.
auto MaskToCount(std::uint32_t le_mask, std::size_t keys_per_entry) -> std::size_t;

/// findNextEntry: the successor reference for comparison count r.
inline auto
Route(const EntryView &entry, const std::size_t r)  //
    -> Slot
{
  if (r >= entry.slots.size()) throw CorruptionError{"routing count out of range"};
  return entry.slots[r];
}

struct IndexOptions {
  std::size_t keys_per_entry{4};
  /// Segments built independently; 1 means a single sequential scan.
  std::size_t workers{1};
};

/**
 * @brief The index layer: every level above the storage layer, as arrays of entries.
 *
 * Level 1 is the lowest index level; its routing slots point at storage nodes (the
 * interceptions). Level l holds the sentinel plus every indexed node of height > l.
 * Immutable once built, so any number of readers may share it.
 */
class IndexLayer
{
 public:
  static constexpr std::size_t kMaxKeysPerEntry = 16;

  IndexLayer() = default;

  /**
   * @brief Bottom-up construction from a quiescent storage layer.
   *
   * Live nodes only. With workers > 1 the storage layer is cut into contiguous
   * segments, each scanned by its own job, and the per-segment level lists are
   * concatenated level by level. The result does not depend on `workers`.
   */
  static auto Build(const StorageLayer &storage, IndexOptions options,
                    WorkerPool *pool = nullptr) -> IndexLayer;

  /**
   * @brief Drop tombstones from `storage`, then build a fresh index layer.
   *
   * The old layer provides segment boundaries for the parallel compaction and is
   * otherwise discarded by the caller after the swap.
   */
  static auto Rebuild(StorageLayer &storage, const IndexLayer &old, IndexOptions options,
                      WorkerPool *pool = nullptr) -> IndexLayer;

  [[nodiscard]] auto
  keys_per_entry() const  //
      -> std::size_t
  {
    return keys_per_entry_;
  }

  /// Number of stored index levels (at least 1).
  [[nodiscard]] auto
  level_count() const  //
      -> std::size_t
  {
    return levels_.size();
  }

  /// H: storage layer plus every level holding a non-sentinel key.
  [[nodiscard]] auto Height() const -> std::size_t;

  /// Level l in [1, level_count()].
  [[nodiscard]] auto
  level(const std::size_t l) const  //
      -> const IndexLevel &
  {
    return levels_[l - 1];
  }

  [[nodiscard]] auto
  Entry(const std::size_t l, const std::size_t e) const  //
      -> EntryView
  {
    const auto &lv = levels_[l - 1];
    const auto m = keys_per_entry_;
    return EntryView{std::span<const Key>{lv.keys}.subspan(e * m, m),
                     std::span<const Slot>{lv.slots}.subspan(e * (m + 1), m + 1)};
  }

  [[nodiscard]] auto
  sentinel() const  //
      -> DataNode *
  {
    return sentinel_;
  }

  /// Bytes held by key arrays and routing tables.
  [[nodiscard]] auto Bytes() const -> std::size_t;

  /// Per-level entry counts, lowest level first.
  [[nodiscard]] auto EntryCounts() const -> std::vector<std::size_t>;

  /**
   * @brief Text dump: one line per entry, "level entry | keys | slots".
   *
   * Slots print as N<entry> (next), D<entry> (down) or K<key> (data node), so dumps of
   * equal layers compare equal regardless of node addresses.
   */
  [[nodiscard]] auto Serialize() const -> std::string;

 private:
  std::vector<IndexLevel> levels_{};
  std::size_t keys_per_entry_{4};
  DataNode *sentinel_{nullptr};
};

}  // namespace piskip
