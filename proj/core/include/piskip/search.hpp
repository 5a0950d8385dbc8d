#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "piskip/index_layer.hpp"
#include "piskip/storage.hpp"

namespace piskip
{
/// Storage-layer entry point of a query: the indexed node with the largest key <= it.
using Interception = DataNode *;

/// Entry visits recorded by instrumented traversals.
struct TraversalStats {
  std::uint64_t traversals{0};
  std::uint64_t entries{0};
  /// entries_per_level[l - 1]: entries compared at index level l.
  std::vector<std::uint64_t> entries_per_level{};

  void Merge(const TraversalStats &other);

  [[nodiscard]] auto
  MeanEntries() const  //
      -> double
  {
    return traversals == 0 ? 0.0
                           : static_cast<double>(entries) / static_cast<double>(traversals);
  }
};

/// Lane mask of keys[i] <= query, compared one key at a time.
auto LessEqualMaskScalar(std::span<const Key> keys, Key query) -> std::uint32_t;

/// Lane mask of keys[i] <= query using 128-bit vector compares where available.
auto LessEqualMaskVector(std::span<const Key> keys, Key query) -> std::uint32_t;

/// Whether LessEqualMaskVector runs on hardware lanes in this build.
auto HasVectorLanes() -> bool;

/// Interception by plain per-key comparisons; the reference for the vector path.
auto TraverseScalar(const IndexLayer &index, Key key, TraversalStats *stats = nullptr)
    -> Interception;

/**
 * @brief Interception by one vector compare per visited entry.
 *
 * @throws CorruptionError when an entry yields a non-unary comparison mask.
 */
auto TraverseVector(const IndexLayer &index, Key key, TraversalStats *stats = nullptr)
    -> Interception;

/**
 * @brief Traverse sorted keys in groups, level by level, prefetching each query's next
 * entry before moving on to the next query of the group.
 *
 * out[i] receives the interception of keys[i]; out.size() must equal keys.size().
 */
void TraverseGroup(const IndexLayer &index, std::span<const Key> keys,
                   std::size_t group_size, std::span<Interception> out,
                   TraversalStats *stats = nullptr);

inline constexpr std::size_t kDefaultGroupSize = 16;

}  // namespace piskip
