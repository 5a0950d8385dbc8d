#include "piskip/storage.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "piskip/hash.hpp"

namespace piskip
{
/*######################################################################################
 * NodeArena
 *####################################################################################*/

auto
NodeArena::New(const Key key, const ValueHandle value, const std::uint8_t height)  //
    -> DataNode *
{
  const auto offset = size_ % kChunkNodes;
  if (offset == 0) {
    chunks_.emplace_back(std::make_unique<DataNode[]>(kChunkNodes));
  }
  auto *node = &chunks_.back()[offset];
  node->key = key;
  node->value = value;
  node->height = height;
  node->deleted = false;
  node->next = nullptr;
  ++size_;
  return node;
}

auto
NodeArena::At(const std::size_t i) const  //
    -> DataNode *
{
  return &chunks_[i / kChunkNodes][i % kChunkNodes];
}

/*######################################################################################
 * Heights
 *####################################################################################*/

auto
MaxHeightFor(const double elevation_prob, const std::uint64_t capacity)  //
    -> std::uint8_t
{
  if (elevation_prob <= 0.0 || capacity <= 1) return 1;
  const auto levels = std::ceil(std::log(static_cast<double>(capacity))
                                    / -std::log(elevation_prob)
                                - 1e-9);
  return static_cast<std::uint8_t>(std::clamp(levels + 2.0, 1.0, 64.0));
}

HeightGenerator::HeightGenerator(  //
    const double elevation_prob,
    const std::uint64_t seed,
    const std::uint8_t max_height)
    : prob_{elevation_prob}, seed_{seed}, max_height_{max_height}
{
  if (!(elevation_prob >= 0.0 && elevation_prob < 1.0)) {
    throw ConfigError{"elevation probability must lie in [0, 1)"};
  }
  if (max_height == 0) throw ConfigError{"max height must be positive"};
}

auto
HeightGenerator::Draw(const Key key) const  //
    -> std::uint8_t
{
  SplitMix64 rng{seed_ ^ Mix64(static_cast<std::uint64_t>(key) + 0x51ed270b27a3c3c1ULL)};
  std::uint8_t h = 1;
  while (h < max_height_ && rng.NextDouble() < prob_) ++h;
  return h;
}

/*######################################################################################
 * StorageLayer
 *####################################################################################*/

StorageLayer::StorageLayer(StorageOptions options)
    : options_{options},
      heights_{options.elevation_prob, options.seed,
               MaxHeightFor(options.elevation_prob, options.capacity)},
      sentinel_{std::make_unique<DataNode>()}
{
  if (!(options.rebuild_ratio > 0.0)) throw ConfigError{"rebuild ratio must be positive"};
  sentinel_->key = kSentinelKey;
  sentinel_->height = heights_.max_height();
  head_ = sentinel_.get();
}

auto
StorageLayer::BulkLoad(  //
    const std::span<const std::pair<Key, ValueHandle>> pairs,
    StorageOptions options)  //
    -> StorageLayer
{
  return BulkLoad(pairs, {}, options);
}

auto
StorageLayer::BulkLoad(  //
    const std::span<const std::pair<Key, ValueHandle>> pairs,
    const std::span<const std::uint8_t> heights,
    StorageOptions options)  //
    -> StorageLayer
{
  if (!heights.empty() && heights.size() != pairs.size()) {
    throw std::invalid_argument{"one height per pair is required"};
  }
  StorageLayer s{options};
  auto arena = std::make_unique<NodeArena>();
  DataNode *tail = s.head_;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto [key, value] = pairs[i];
    if (key == kSentinelKey) {
      throw std::invalid_argument{"key 0 is reserved for the head sentinel"};
    }
    if (tail != s.head_ && key <= tail->key) {
      throw std::invalid_argument{"bulk-load input must be strictly sorted (key "
                                  + std::to_string(key) + " after "
                                  + std::to_string(tail->key) + ")"};
    }
    const auto height =
        heights.empty()
            ? s.heights_.Draw(key)
            : std::clamp<std::uint8_t>(heights[i], 1, s.heights_.max_height());
    auto *node = arena->New(key, value, height);
    tail->next = node;
    tail = node;
  }
  s.live_count_ = pairs.size();
  s.node_count_ = pairs.size();
  s.base_size_ = pairs.size();
  s.data_arenas_.push_back(std::move(arena));
  return s;
}

auto
RebuildThresholdFor(const double ratio, const std::uint64_t base)  //
    -> std::uint64_t
{
  const auto raw = std::ceil(ratio * static_cast<double>(base) - 1e-9);
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::max(raw, 0.0)));
}

auto
StorageLayer::RebuildThreshold() const  //
    -> std::uint64_t
{
  return RebuildThresholdFor(options_.rebuild_ratio, base_size_);
}

void
StorageLayer::PrepareWriters(const std::size_t n)
{
  while (writer_arenas_.size() < n) writer_arenas_.push_back(std::make_unique<NodeArena>());
}

auto
StorageLayer::MakeWriter(const std::size_t slot, AccessLog *log)  //
    -> Writer
{
  if (slot >= writer_arenas_.size()) {
    throw std::out_of_range{"writer slot not prepared: " + std::to_string(slot)};
  }
  return Writer{this, writer_arenas_[slot].get(), log};
}

void
StorageLayer::Commit(Writer &writer)
{
  live_count_ = static_cast<std::uint64_t>(static_cast<std::int64_t>(live_count_)
                                           + writer.live_delta_);
  node_count_ += writer.inserted_;
  update_count_ += writer.updates_;
  if (writer.inserted_ > 0) ordered_ = false;
  writer.live_delta_ = 0;
  writer.inserted_ = 0;
  writer.updates_ = 0;
}

auto
StorageLayer::InsertAfter(  //
    DataNode *pred,
    const Key key,
    const ValueHandle value,
    const std::uint8_t height)  //
    -> DataNode *
{
  PrepareWriters(1);
  auto w = MakeWriter(0);
  auto *node = w.InsertAfter(pred, key, value, height);
  Commit(w);
  return node;
}

void
StorageLayer::Tombstone(DataNode *node)
{
  PrepareWriters(1);
  auto w = MakeWriter(0);
  w.Tombstone(node);
  Commit(w);
}

auto
StorageLayer::SplitPoints(const std::size_t parts) const  //
    -> std::vector<DataNode *>
{
  std::vector<DataNode *> points{head_};
  const auto n = node_count_;
  if (parts <= 1 || n == 0) return points;

  std::vector<std::uint64_t> positions;
  for (std::size_t k = 1; k < parts; ++k) {
    const auto pos = n * k / parts;
    if (positions.empty() || pos > positions.back()) positions.push_back(pos);
  }
  if (ordered_) {
    std::size_t arena = 0;
    std::uint64_t base = 0;
    for (const auto pos : positions) {
      while (pos >= base + data_arenas_[arena]->size()) {
        base += data_arenas_[arena]->size();
        ++arena;
      }
      points.push_back(data_arenas_[arena]->At(pos - base));
    }
    return points;
  }

  std::uint64_t i = 0;
  std::size_t next = 0;
  for (auto *node = head_->next; node != nullptr && next < positions.size();
       node = node->next, ++i) {
    if (i == positions[next]) {
      points.push_back(node);
      ++next;
    }
  }
  return points;
}

void
StorageLayer::CompactSegment(  //
    DataNode *from,
    const DataNode *until,
    NodeArena &out,
    DataNode *&first,
    DataNode *&last,
    std::size_t &count) const
{
  for (auto *node = from; node != until && node != nullptr; node = node->next) {
    if (node->deleted) continue;
    auto *copy = out.New(node->key, node->value, node->height);
    if (last == nullptr) {
      first = copy;
    } else {
      last->next = copy;
    }
    last = copy;
    ++count;
  }
}

void
StorageLayer::FinishCompaction(  //
    std::vector<NodeArena> arenas,
    std::vector<DataNode *> firsts,
    std::vector<DataNode *> lasts,
    std::vector<std::size_t> counts)
{
  DataNode *tail = head_;
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < firsts.size(); ++i) {
    if (firsts[i] == nullptr) continue;
    tail->next = firsts[i];
    tail = lasts[i];
    total += counts[i];
  }
  tail->next = nullptr;

  data_arenas_.clear();
  for (auto &a : arenas) {
    if (a.size() > 0) data_arenas_.push_back(std::make_unique<NodeArena>(std::move(a)));
  }
  writer_arenas_.clear();
  live_count_ = total;
  node_count_ = total;
  base_size_ = total;
  update_count_ = 0;
  ordered_ = true;
}

auto
StorageLayer::ArenaBytes() const  //
    -> std::size_t
{
  std::size_t bytes = sizeof(DataNode);
  for (const auto &a : data_arenas_) bytes += a->bytes();
  for (const auto &a : writer_arenas_) bytes += a->bytes();
  return bytes;
}

/*######################################################################################
 * Writer
 *####################################################################################*/

auto
StorageLayer::Writer::InsertAfter(  //
    DataNode *pred,
    const Key key,
    const ValueHandle value,
    const std::uint8_t height)  //
    -> DataNode *
{
  auto *succ = pred->next;
  if (!(pred->key < key) || (succ != nullptr && !(key < succ->key))) {
    throw CorruptionError{"insert of key " + std::to_string(key)
                          + " violates storage order after key "
                          + std::to_string(pred->key)};
  }
  if (height == 0) throw CorruptionError{"node height must be positive"};
  auto *node = arena_->New(key, value, height);
  node->next = succ;
  pred->next = node;
  if (log_ != nullptr) {
    log_->push_back({pred, true});
    log_->push_back({node, true});
  }
  ++live_delta_;
  ++inserted_;
  ++updates_;
  return node;
}

void
StorageLayer::Writer::Tombstone(DataNode *node)
{
  if (node == owner_->head_) throw CorruptionError{"the sentinel cannot be deleted"};
  if (log_ != nullptr) log_->push_back({node, true});
  if (node->deleted) return;
  node->deleted = true;
  --live_delta_;
  ++updates_;
}

auto
StorageLayer::Writer::Overwrite(DataNode *node, const ValueHandle value)  //
    -> bool
{
  if (node == owner_->head_) throw CorruptionError{"the sentinel holds no value"};
  if (log_ != nullptr) log_->push_back({node, true});
  node->value = value;
  const bool revived = node->deleted;
  if (revived) {
    node->deleted = false;
    ++live_delta_;
  }
  return revived;
}

}  // namespace piskip
