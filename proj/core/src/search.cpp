#include "piskip/search.hpp"

#include <algorithm>

#if defined(__SSE2__)
#include <emmintrin.h>
#define PISKIP_HAVE_SSE2 1
#endif

namespace piskip
{
void
TraversalStats::Merge(const TraversalStats &other)
{
  traversals += other.traversals;
  entries += other.entries;
  if (entries_per_level.size() < other.entries_per_level.size()) {
    entries_per_level.resize(other.entries_per_level.size(), 0);
  }
  for (std::size_t i = 0; i < other.entries_per_level.size(); ++i) {
    entries_per_level[i] += other.entries_per_level[i];
  }
}

auto
LessEqualMaskScalar(const std::span<const Key> keys, const Key query)  //
    -> std::uint32_t
{
  std::uint32_t mask = 0;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (keys[i] <= query) mask |= std::uint32_t{1} << i;
  }
  return mask;
}

auto
HasVectorLanes()  //
    -> bool
{
#if defined(PISKIP_HAVE_SSE2)
  return true;
#else
  return false;
#endif
}

namespace
{
#if defined(PISKIP_HAVE_SSE2)
/// Four unsigned lanes: SSE2 only has signed compares, so flip the sign bits first.
inline auto
LessEqualMask4(const Key *keys, const __m128i query_biased)  //
    -> std::uint32_t
{
  const auto bias = _mm_set1_epi32(static_cast<int>(0x80000000U));
  const auto lanes = _mm_xor_si128(_mm_loadu_si128(reinterpret_cast<const __m128i *>(keys)), bias);
  const auto greater = _mm_cmpgt_epi32(lanes, query_biased);
  const auto gt_bits = static_cast<std::uint32_t>(_mm_movemask_ps(_mm_castsi128_ps(greater)));
  return ~gt_bits & 0xFU;
}

inline auto
BiasedQuery(const Key query)  //
    -> __m128i
{
  return _mm_set1_epi32(static_cast<int>(query ^ 0x80000000U));
}
#endif

template <std::size_t kM>
inline auto
MaskFixed(const Key *keys, const Key query)  //
    -> std::uint32_t
{
#if defined(PISKIP_HAVE_SSE2)
  static_assert(kM % 4 == 0);
  const auto q = BiasedQuery(query);
  std::uint32_t mask = 0;
  for (std::size_t i = 0; i < kM; i += 4) mask |= LessEqualMask4(keys + i, q) << i;
  return mask;
#else
  return LessEqualMaskScalar(std::span<const Key>{keys, kM}, query);
#endif
}

/// Follow routing tables from the top entry down to a storage node.
template <class MaskFn>
inline auto
Descend(const IndexLayer &index, const Key key, TraversalStats *stats, MaskFn &&mask_of)
    -> Interception
{
  const auto m = index.keys_per_entry();
  auto level = index.level_count();
  std::size_t entry = 0;
  if (stats != nullptr) {
    ++stats->traversals;
    if (stats->entries_per_level.size() < level) stats->entries_per_level.resize(level, 0);
  }
  while (true) {
    const auto &lv = index.level(level);
    const auto *keys = lv.keys.data() + entry * m;
    const auto r = MaskToCount(mask_of(keys, key), m);
    const auto slot = lv.slots[entry * (m + 1) + r];
    if (stats != nullptr) {
      ++stats->entries;
      ++stats->entries_per_level[level - 1];
    }
    switch (slot.kind()) {
      case SlotKind::kNext:
        entry = slot.entry();
        break;
      case SlotKind::kDown:
        entry = slot.entry();
        --level;
        break;
      case SlotKind::kData:
        return slot.node();
    }
  }
}

}  // namespace

auto
LessEqualMaskVector(const std::span<const Key> keys, const Key query)  //
    -> std::uint32_t
{
#if defined(PISKIP_HAVE_SSE2)
  const auto q = BiasedQuery(query);
  std::uint32_t mask = 0;
  std::size_t i = 0;
  for (; i + 4 <= keys.size(); i += 4) mask |= LessEqualMask4(keys.data() + i, q) << i;
  if (i < keys.size()) mask |= LessEqualMaskScalar(keys.subspan(i), query) << i;
  return mask;
#else
  return LessEqualMaskScalar(keys, query);
#endif
}

auto
TraverseScalar(const IndexLayer &index, const Key key, TraversalStats *stats)  //
    -> Interception
{
  const auto m = index.keys_per_entry();
  return Descend(index, key, stats, [m](const Key *keys, const Key q) {
    return LessEqualMaskScalar(std::span<const Key>{keys, m}, q);
  });
}

auto
TraverseVector(const IndexLayer &index, const Key key, TraversalStats *stats)  //
    -> Interception
{
  switch (index.keys_per_entry()) {
    case 4:
      return Descend(index, key, stats, MaskFixed<4>);
    case 8:
      return Descend(index, key, stats, MaskFixed<8>);
    case 16:
      return Descend(index, key, stats, MaskFixed<16>);
    default: {
      const auto m = index.keys_per_entry();
      return Descend(index, key, stats, [m](const Key *keys, const Key q) {
        return LessEqualMaskVector(std::span<const Key>{keys, m}, q);
      });
    }
  }
}

void
TraverseGroup(  //
    const IndexLayer &index,
    const std::span<const Key> keys,
    const std::size_t group_size,
    const std::span<Interception> out,
    TraversalStats *stats)
{
  if (out.size() != keys.size()) throw std::invalid_argument{"output size mismatch"};
  const auto m = index.keys_per_entry();
  const auto top = index.level_count();
  const auto width = std::max<std::size_t>(1, group_size);
  if (stats != nullptr) {
    stats->traversals += keys.size();
    if (stats->entries_per_level.size() < top) stats->entries_per_level.resize(top, 0);
  }

  std::vector<std::size_t> cursor(width);
  for (std::size_t base = 0; base < keys.size(); base += width) {
    const auto n = std::min(width, keys.size() - base);
    std::fill_n(cursor.begin(), n, 0);
    for (auto level = top; level >= 1; --level) {
      const auto &lv = index.level(level);
      for (std::size_t i = 0; i < n; ++i) {
        const auto key = keys[base + i];
        auto entry = cursor[i];
        while (true) {
          const auto mask = LessEqualMaskVector(
              std::span<const Key>{lv.keys.data() + entry * m, m}, key);
          const auto slot = lv.slots[entry * (m + 1) + MaskToCount(mask, m)];
          if (stats != nullptr) {
            ++stats->entries;
            ++stats->entries_per_level[level - 1];
          }
          if (slot.kind() == SlotKind::kNext) {
            entry = slot.entry();
            continue;
          }
          if (slot.kind() == SlotKind::kDown) {
            cursor[i] = slot.entry();
            __builtin_prefetch(index.level(level - 1).keys.data() + slot.entry() * m);
          } else {
            out[base + i] = slot.node();
            __builtin_prefetch(slot.node());
          }
          break;
        }
      }
    }
  }
}

}  // namespace piskip
