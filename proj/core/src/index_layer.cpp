#include "piskip/index_layer.hpp"

#include <algorithm>
#include <bit>
#include <sstream>

namespace piskip
{
namespace
{
/// Per-segment output of the storage scan.
struct SegmentScan {
  /// keys[l-1]: keys of this segment present at level l.
  std::vector<std::vector<Key>> keys{};
  /// down[l-1][j]: local position at level l-1 of keys[l-1][j] (levels >= 2).
  std::vector<std::vector<std::uint32_t>> down{};
  /// Storage nodes behind the level-1 keys.
  std::vector<DataNode *> nodes{};
};

void
ScanSegment(const DataNode *from, const DataNode *until, SegmentScan &out)
{
  for (auto *node = const_cast<DataNode *>(from); node != until && node != nullptr;
       node = node->next) {
    if (node->deleted || node->height <= 1) continue;
    const std::size_t levels = node->height - 1U;
    if (out.keys.size() < levels) {
      out.keys.resize(levels);
      out.down.resize(levels);
    }
    out.keys[0].push_back(node->key);
    out.nodes.push_back(node);
    for (std::size_t l = 1; l < levels; ++l) {
      out.keys[l].push_back(node->key);
      out.down[l].push_back(static_cast<std::uint32_t>(out.keys[l - 1].size() - 1));
    }
  }
}

void
ValidateOptions(const IndexOptions &options)
{
  const auto m = options.keys_per_entry;
  if (m < 2 || m > IndexLayer::kMaxKeysPerEntry) {
    throw ConfigError{"keys per entry must lie in [2, 16]"};
  }
  if (options.workers == 0) throw ConfigError{"at least one build worker is required"};
}

}  // namespace

auto
MaskToCount(const std::uint32_t le_mask, const std::size_t keys_per_entry)  //
    -> std::size_t
{
  const auto r = static_cast<std::size_t>(std::popcount(le_mask));
  const auto expected = (r == 32) ? ~std::uint32_t{0} : ((std::uint32_t{1} << r) - 1U);
  if (le_mask != expected || r > keys_per_entry) {
    throw CorruptionError{"comparison mask is not unary: entry keys out of order"};
  }
  return r;
}

auto
IndexLayer::Build(const StorageLayer &storage, const IndexOptions options, WorkerPool *pool)
    -> IndexLayer
{
  ValidateOptions(options);
  const auto m = options.keys_per_entry;

  // segments: [starts[s], starts[s+1]); the sentinel itself is not scanned
  const auto starts = storage.SplitPoints(options.workers);
  const auto n_seg = starts.size();
  std::vector<SegmentScan> scans(n_seg);
  RunOn(pool, n_seg, [&](const std::size_t s) {
    const DataNode *from = (s == 0) ? starts[0]->next : starts[s];
    const DataNode *until = (s + 1 < n_seg) ? starts[s + 1] : nullptr;
    ScanSegment(from, until, scans[s]);
  });

  std::size_t n_levels = 1;
  for (const auto &sc : scans) n_levels = std::max(n_levels, sc.keys.size());

  // offsets[l-1][s]: first global position of segment s at level l (sentinel is 0)
  std::vector<std::vector<std::size_t>> offsets(n_levels, std::vector<std::size_t>(n_seg));
  IndexLayer index;
  index.keys_per_entry_ = m;
  index.sentinel_ = storage.head();
  index.levels_.resize(n_levels);
  for (std::size_t l = 0; l < n_levels; ++l) {
    std::size_t pos = 1;
    for (std::size_t s = 0; s < n_seg; ++s) {
      offsets[l][s] = pos;
      if (l < scans[s].keys.size()) pos += scans[s].keys[l].size();
    }
    auto &lv = index.levels_[l];
    lv.key_count = pos;
    lv.entry_count = (pos + m - 1) / m;
    lv.keys.assign(lv.entry_count * m, kMaxKey);
    lv.slots.assign(lv.entry_count * (m + 1), Slot{});
    lv.keys[0] = kSentinelKey;
  }

  // concatenate level by level; positions are global from here on
  std::vector<std::vector<std::uint32_t>> down(n_levels);
  for (std::size_t l = 1; l < n_levels; ++l) down[l].assign(index.levels_[l].key_count, 0);
  std::vector<DataNode *> nodes(index.levels_[0].key_count, storage.head());
  RunOn(pool, n_seg, [&](const std::size_t s) {
    const auto &sc = scans[s];
    for (std::size_t l = 0; l < sc.keys.size(); ++l) {
      const auto off = offsets[l][s];
      std::copy(sc.keys[l].begin(), sc.keys[l].end(),
                index.levels_[l].keys.begin() + static_cast<std::ptrdiff_t>(off));
      if (l == 0) {
        std::copy(sc.nodes.begin(), sc.nodes.end(),
                  nodes.begin() + static_cast<std::ptrdiff_t>(off));
      } else {
        const auto below = offsets[l - 1][s];
        for (std::size_t j = 0; j < sc.down[l].size(); ++j) {
          down[l][off + j] = static_cast<std::uint32_t>(below + sc.down[l][j]);
        }
      }
    }
  });

  // routing tables; entries of each level are split evenly among the jobs
  const auto n_jobs = std::max<std::size_t>(1, std::min(options.workers, n_seg));
  RunOn(pool, n_jobs, [&](const std::size_t job) {
    for (std::size_t l = 0; l < n_levels; ++l) {
      auto &lv = index.levels_[l];
      const auto count = lv.key_count;
      const auto descend = [&](const std::size_t pos) -> Slot {
        if (l == 0) return Slot::Data(nodes[pos]);
        const auto below = down[l][pos];
        const auto &lower = index.levels_[l - 1];
        // resume at the successor of the descent key; it is the first unknown one
        const auto target = (below + 1U < lower.key_count) ? below + 1U : below;
        return Slot::Down(target / m);
      };
      const auto first = lv.entry_count * job / n_jobs;
      const auto last = lv.entry_count * (job + 1) / n_jobs;
      for (auto e = first; e < last; ++e) {
        auto *slots = &lv.slots[e * (m + 1)];
        slots[0] = descend(e == 0 ? 0 : e * m - 1);
        for (std::size_t r = 1; r < m; ++r) {
          slots[r] = descend(std::min(e * m + r - 1, count - 1));
        }
        slots[m] = (e + 1 < lv.entry_count) ? Slot::Next(e + 1)
                                            : descend(std::min(e * m + m - 1, count - 1));
      }
    }
  });
  return index;
}

auto
IndexLayer::Rebuild(  //
    StorageLayer &storage,
    const IndexLayer &old,
    const IndexOptions options,
    WorkerPool *pool)  //
    -> IndexLayer
{
  ValidateOptions(options);
  // level-1 nodes of the old layer split the storage layer cheaply
  std::vector<DataNode *> starts{storage.head()};
  if (options.workers > 1 && old.level_count() > 0) {
    const auto &lv = old.level(1);
    const auto m = old.keys_per_entry();
    const auto interceptions = lv.key_count;
    for (std::size_t k = 1; k < options.workers; ++k) {
      const auto pos = interceptions * k / options.workers;
      if (pos == 0) continue;
      // descent under key i of entry e is slot i+1, or slot 0 of entry e+1 for the last
      const auto e = pos / m;
      const auto i = pos % m;
      const auto slot = (i + 1 < m) ? lv.slots[e * (m + 1) + i + 1]
                        : (e + 1 < lv.entry_count) ? lv.slots[(e + 1) * (m + 1)]
                                                   : lv.slots[e * (m + 1) + m];
      auto *node = slot.node();
      if (slot.kind() == SlotKind::kData && node != starts.back()
          && node->key > starts.back()->key) {
        starts.push_back(node);
      }
    }
  }
  storage.Compact(std::span<DataNode *const>{starts},
                  [pool](std::size_t n, const auto &fn) { RunOn(pool, n, fn); });
  return Build(storage, options, pool);
}

auto
IndexLayer::Height() const  //
    -> std::size_t
{
  std::size_t h = 1;
  for (const auto &lv : levels_) {
    if (lv.key_count > 1) ++h;
  }
  return h;
}

auto
IndexLayer::Bytes() const  //
    -> std::size_t
{
  std::size_t bytes = 0;
  for (const auto &lv : levels_) {
    bytes += lv.keys.size() * sizeof(Key) + lv.slots.size() * sizeof(Slot);
  }
  return bytes;
}

auto
IndexLayer::EntryCounts() const  //
    -> std::vector<std::size_t>
{
  std::vector<std::size_t> counts;
  counts.reserve(levels_.size());
  for (const auto &lv : levels_) counts.push_back(lv.entry_count);
  return counts;
}

auto
IndexLayer::Serialize() const  //
    -> std::string
{
  std::ostringstream os;
  const auto m = keys_per_entry_;
  for (std::size_t l = 1; l <= levels_.size(); ++l) {
    const auto &lv = level(l);
    for (std::size_t e = 0; e < lv.entry_count; ++e) {
      const auto view = Entry(l, e);
      os << l << ' ' << e << " |";
      for (std::size_t i = 0; i < m; ++i) {
        if (e * m + i < lv.key_count) {
          os << ' ' << view.keys[i];
        } else {
          os << " -";
        }
      }
      os << " |";
      for (const auto slot : view.slots) {
        switch (slot.kind()) {
          case SlotKind::kData:
            os << " K" << slot.node()->key;
            break;
          case SlotKind::kNext:
            os << " N" << slot.entry();
            break;
          case SlotKind::kDown:
            os << " D" << slot.entry();
            break;
        }
      }
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace piskip
