#include "piskip/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <stdexcept>
#include <unordered_map>

namespace piskip
{
/*######################################################################################
 * Shard
 *####################################################################################*/

Shard::Shard(ShardOptions options) : options_{options}, storage_{options.storage}
{
  index_ = IndexLayer::Build(storage_, IndexOptions{options_.keys_per_entry, 1});
}

auto
Shard::Load(  //
    const std::span<const std::pair<Key, ValueHandle>> pairs,
    const ShardOptions options,
    const std::size_t build_workers,
    WorkerPool *pool)  //
    -> Shard
{
  Shard shard{options};
  shard.storage_ = StorageLayer::BulkLoad(pairs, options.storage);
  shard.index_ = IndexLayer::Build(
      shard.storage_, IndexOptions{options.keys_per_entry, std::max<std::size_t>(1, build_workers)},
      pool);
  return shard;
}

auto
Shard::MaybeRebuild(const std::size_t workers, WorkerPool *pool)  //
    -> bool
{
  if (!storage_.NeedsRebuild()) return false;
  Rebuild(workers, pool);
  return true;
}

void
Shard::Rebuild(const std::size_t workers, WorkerPool *pool)
{
  const auto t0 = std::chrono::steady_clock::now();
  index_ = IndexLayer::Rebuild(
      storage_, index_,
      IndexOptions{options_.keys_per_entry, std::max<std::size_t>(1, workers)}, pool);
  rebuild_seconds_ +=
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ++rebuilds_;
}

auto
Shard::LivePairs() const  //
    -> std::vector<std::pair<Key, ValueHandle>>
{
  std::vector<std::pair<Key, ValueHandle>> out;
  out.reserve(storage_.live_count());
  for (const auto *node = storage_.head()->next; node != nullptr; node = node->next) {
    if (!node->deleted) out.emplace_back(node->key, node->value);
  }
  return out;
}

/*######################################################################################
 * Pipeline steps
 *####################################################################################*/

auto
PartitionQueries(const QuerySet &qs, const std::size_t n_workers)  //
    -> std::vector<WorkerBatch>
{
  if (n_workers == 0) throw ConfigError{"at least one worker is required"};
  std::vector<WorkerBatch> batches(n_workers);
  const auto n = qs.size();
  const auto base = n / n_workers;
  const auto extra = n % n_workers;
  std::size_t pos = 0;
  for (std::size_t w = 0; w < n_workers; ++w) {
    const auto len = base + (w < extra ? 1 : 0);
    batches[w].worker_id = w;
    batches[w].queries.assign(qs.begin() + static_cast<std::ptrdiff_t>(pos),
                              qs.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return batches;
}

void
TraverseBatch(  //
    const IndexLayer &index,
    WorkerBatch &batch,
    const std::size_t group_size,
    TraversalStats *stats)
{
  std::vector<Key> keys;
  keys.reserve(batch.queries.size());
  for (const auto &q : batch.queries) keys.push_back(q.key);
  batch.interceptions.assign(keys.size(), nullptr);
  TraverseGroup(index, keys, group_size, batch.interceptions, stats);
}

auto
RedistributeStep(WorkerBatch &self, WorkerBatch incoming, const Interception next_first)
    -> WorkerBatch
{
  if (incoming.queries.size() != incoming.interceptions.size()
      || self.queries.size() != self.interceptions.size()) {
    throw std::invalid_argument{"redistribution before traversal"};
  }
  if (!incoming.queries.empty()) {
    self.queries.insert(self.queries.begin(), incoming.queries.begin(), incoming.queries.end());
    self.interceptions.insert(self.interceptions.begin(), incoming.interceptions.begin(),
                              incoming.interceptions.end());
  }

  WorkerBatch out;
  out.worker_id = self.worker_id + 1;
  if (next_first == nullptr) return out;
  auto cut = self.interceptions.size();
  while (cut > 0 && self.interceptions[cut - 1] == next_first) --cut;
  const auto d = static_cast<std::ptrdiff_t>(cut);
  out.queries.assign(self.queries.begin() + d, self.queries.end());
  out.interceptions.assign(self.interceptions.begin() + d, self.interceptions.end());
  self.queries.resize(cut);
  self.interceptions.resize(cut);
  return out;
}

namespace
{
/// First interception of the nearest non-empty worker right of `w`.
template <class Firsts>
auto
NextFirst(const Firsts &firsts, const std::size_t w)  //
    -> Interception
{
  for (auto j = w + 1; j < firsts.size(); ++j) {
    if (firsts[j] != nullptr) return firsts[j];
  }
  return nullptr;
}

}  // namespace

auto
Redistribute(std::vector<WorkerBatch> batches)  //
    -> std::vector<WorkerBatch>
{
  std::vector<Interception> firsts;
  firsts.reserve(batches.size());
  for (const auto &b : batches) firsts.push_back(b.FirstInterception());
  WorkerBatch carry;
  for (std::size_t w = 0; w < batches.size(); ++w) {
    carry = RedistributeStep(batches[w], std::move(carry), NextFirst(firsts, w));
  }
  return batches;
}

auto
ExecuteBatch(  //
    const WorkerBatch &batch,
    StorageLayer::Writer &writer,
    const StorageLayer &storage,
    ExecuteStats *stats)  //
    -> std::vector<QueryResult>
{
  std::vector<QueryResult> results;
  results.reserve(batch.queries.size());
  auto *walk_stats = stats == nullptr ? nullptr : &stats->walk;
  auto *log = writer.log();
  const auto *head = storage.head();
  DataNode *prev = nullptr;

  for (std::size_t i = 0; i < batch.queries.size(); ++i) {
    const auto &q = batch.queries[i];
    auto *start = batch.interceptions[i];
    if (start == nullptr || start->key > q.key) {
      throw CorruptionError{"interception lies right of query key " + std::to_string(q.key)};
    }
    // the previous query's node is never left of this one's predecessor
    if (prev != nullptr && prev->key >= start->key) start = prev;
    auto *node = WalkFrom(start, q.key, walk_stats, log);
    const bool hit = node != head && node->key == q.key;

    QueryResult r{q.seq, NotFound{}};
    switch (q.type) {
      case QueryType::kSearch:
        if (hit && !node->deleted) r.outcome = Found{node->value};
        break;
      case QueryType::kInsert:
        if (hit) {
          r.outcome = writer.Overwrite(node, *q.value) ? Outcome{Inserted{}} : Outcome{Updated{}};
        } else {
          node = writer.InsertAfter(node, q.key, *q.value, storage.heights().Draw(q.key));
          r.outcome = Inserted{};
        }
        break;
      case QueryType::kDelete:
        if (hit && !node->deleted) {
          writer.Tombstone(node);
          r.outcome = Deleted{};
        }
        break;
      case QueryType::kRangeSearch:
        throw std::invalid_argument{"range searches go through the range pipeline"};
    }
    results.push_back(std::move(r));
    prev = node;
  }
  return results;
}

/*######################################################################################
 * Ownership witness
 *####################################################################################*/

auto
CheckOwnership(const std::span<const AccessLog> logs)  //
    -> OwnershipReport
{
  if (logs.size() > 64) throw std::invalid_argument{"ownership check supports 64 workers"};
  struct Marks {
    std::uint64_t writers{0};
    std::uint64_t readers{0};
  };
  std::unordered_map<const DataNode *, Marks> marks;
  OwnershipReport report;
  for (std::size_t w = 0; w < logs.size(); ++w) {
    const auto bit = std::uint64_t{1} << w;
    for (const auto &a : logs[w]) {
      auto &m = marks[a.node];
      (a.write ? m.writers : m.readers) |= bit;
      ++report.accesses;
    }
  }
  report.nodes_touched = marks.size();
  for (const auto &[node, m] : marks) {
    if (std::popcount(m.writers) > 1) ++report.multi_writer_nodes;
    if (m.writers != 0 && (m.readers & ~m.writers) != 0) ++report.read_write_overlaps;
  }
  return report;
}

/*######################################################################################
 * BatchRun
 *####################################################################################*/

BatchRun::BatchRun(  //
    const QuerySet &qs,
    Shard &shard,
    const std::size_t workers,
    const BatchOptions options)
    : shard_{shard},
      options_{options},
      batches_{PartitionQueries(qs, workers)},
      original_first_(workers, nullptr),
      inbox_(workers),
      delivered_{std::make_unique<std::atomic<bool>[]>(workers)},
      traversed_{static_cast<std::ptrdiff_t>(workers)},
      logs_(workers),
      traversal_stats_(workers),
      execute_stats_(workers),
      results_(workers)
{
  for (const auto &q : qs) {
    if (q.type == QueryType::kRangeSearch) {
      throw std::invalid_argument{"range searches go through the range pipeline"};
    }
  }
  auto &storage = shard_.storage();
  storage.PrepareWriters(workers);
  writers_.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    writers_.push_back(storage.MakeWriter(w, options_.witness ? &logs_[w] : nullptr));
  }
}

void
BatchRun::Fail(std::exception_ptr error)
{
  while (error_lock_.test_and_set(std::memory_order_acquire)) {
  }
  if (error_ == nullptr) error_ = std::move(error);
  error_lock_.clear(std::memory_order_release);
  failed_.store(true, std::memory_order_release);
}

void
BatchRun::Work(const std::size_t w)
{
  auto &batch = batches_[w];
  try {
    TraverseBatch(shard_.index(), batch, shard_.options().group_size, &traversal_stats_[w]);
    original_first_[w] = batch.FirstInterception();
    if (options_.after_traversal) options_.after_traversal(w);
  } catch (...) {
    Fail(std::current_exception());
  }
  traversed_.arrive_and_wait();
  // every traversal failure is visible here, so no worker touches the storage layer
  if (failed_.load(std::memory_order_acquire)) return;

  try {
    WorkerBatch incoming;
    if (w > 0) {
      delivered_[w - 1].wait(false, std::memory_order_acquire);
      incoming = std::move(inbox_[w]);
    }
    auto out = RedistributeStep(batch, std::move(incoming), NextFirst(original_first_, w));
    if (w + 1 < batches_.size()) inbox_[w + 1] = std::move(out);
  } catch (...) {
    Fail(std::current_exception());
  }
  delivered_[w].store(true, std::memory_order_release);
  delivered_[w].notify_one();
  if (failed_.load(std::memory_order_acquire)) return;

  try {
    results_[w] = ExecuteBatch(batch, writers_[w], shard_.storage(), &execute_stats_[w]);
  } catch (...) {
    Fail(std::current_exception());
  }
}

auto
BatchRun::Finish()  //
    -> std::vector<QueryResult>
{
  auto &storage = shard_.storage();
  for (auto &writer : writers_) storage.Commit(writer);
  if (error_ != nullptr) std::rethrow_exception(error_);

  if (options_.witness) ownership_ = CheckOwnership(logs_);
  if (options_.traversal != nullptr) {
    for (const auto &s : traversal_stats_) options_.traversal->Merge(s);
  }
  if (options_.walk != nullptr) {
    for (const auto &s : execute_stats_) {
      options_.walk->walks += s.walk.walks;
      options_.walk->nodes += s.walk.nodes;
    }
  }

  std::vector<QueryResult> merged;
  std::size_t total = 0;
  for (const auto &r : results_) total += r.size();
  merged.reserve(total);
  for (auto &r : results_) std::move(r.begin(), r.end(), std::back_inserter(merged));
  SortBySeq(merged);
  return merged;
}

auto
BatchRun::FinalBatchSizes() const  //
    -> std::vector<std::size_t>
{
  std::vector<std::size_t> sizes;
  sizes.reserve(batches_.size());
  for (const auto &b : batches_) sizes.push_back(b.queries.size());
  return sizes;
}

auto
BatchRun::FirstInterceptions() const  //
    -> std::vector<Interception>
{
  std::vector<Interception> firsts;
  firsts.reserve(batches_.size());
  for (const auto &b : batches_) firsts.push_back(b.FirstInterception());
  return firsts;
}

auto
ProcessBatch(  //
    const QuerySet &qs,
    Shard &shard,
    const std::size_t workers,
    WorkerPool *pool,
    const BatchOptions options)  //
    -> std::vector<QueryResult>
{
  if (workers == 0) throw ConfigError{"at least one worker is required"};
  std::unique_ptr<WorkerPool> local;
  if (pool == nullptr && workers > 1) {
    local = std::make_unique<WorkerPool>(workers);
    pool = local.get();
  }
  BatchRun run{qs, shard, workers, options};
  RunOn(pool, workers, [&run](const std::size_t w) { run.Work(w); });
  auto results = run.Finish();
  if (shard.options().auto_rebuild) shard.MaybeRebuild(workers, pool);
  return results;
}

/*######################################################################################
 * Range queries
 *####################################################################################*/

auto
RedistributeRangeStep(  //
    std::vector<RangePiece> &self,
    std::vector<RangePiece> incoming,
    const Interception next_first)  //
    -> std::vector<RangePiece>
{
  if (!incoming.empty()) {
    incoming.insert(incoming.end(), self.begin(), self.end());
    self = std::move(incoming);
  }
  std::vector<RangePiece> out;
  if (next_first == nullptr) return out;
  const auto cut = next_first->key;

  std::vector<RangePiece> kept;
  kept.reserve(self.size());
  for (auto p : self) {
    if (p.lo >= cut) {
      if (p.start->key < cut) p.start = next_first;
      out.push_back(p);
    } else if (p.hi > cut || (p.hi == cut && !p.hi_exclusive)) {
      out.push_back(RangePiece{cut, p.hi, p.hi_exclusive, p.origin, next_first});
      kept.push_back(RangePiece{p.lo, cut, true, p.origin, p.start});
    } else {
      kept.push_back(p);
    }
  }
  self = std::move(kept);
  return out;
}

auto
ScanPiece(const RangePiece &piece, const StorageLayer &storage, WalkStats *stats)
    -> std::vector<std::pair<Key, ValueHandle>>
{
  std::vector<std::pair<Key, ValueHandle>> hits;
  if (piece.start == nullptr || piece.start->key > piece.lo) {
    throw CorruptionError{"range piece starts right of its lower bound"};
  }
  auto *node = WalkFrom(piece.start, piece.lo, stats);
  if (node == storage.head() || node->key < piece.lo) node = node->next;
  for (; node != nullptr; node = node->next) {
    if (piece.hi_exclusive ? node->key >= piece.hi : node->key > piece.hi) break;
    if (!node->deleted) hits.emplace_back(node->key, node->value);
  }
  return hits;
}

RangeRun::RangeRun(  //
    const std::span<const Query> ranges,
    Shard &shard,
    const std::size_t workers)
    : shard_{shard},
      sorted_(ranges.begin(), ranges.end()),
      pieces_(workers),
      original_first_(workers, nullptr),
      inbox_(workers),
      delivered_{std::make_unique<std::atomic<bool>[]>(workers)},
      traversed_{static_cast<std::ptrdiff_t>(workers)},
      hits_(workers)
{
  if (workers == 0) throw ConfigError{"at least one worker is required"};
  for (const auto &q : sorted_) {
    if (q.type != QueryType::kRangeSearch || !q.upper || *q.upper < q.key) {
      throw std::invalid_argument{"range pipeline expects well-formed range searches"};
    }
  }
  std::stable_sort(sorted_.begin(), sorted_.end(), [](const Query &a, const Query &b) {
    return a.key != b.key ? a.key < b.key : a.seq < b.seq;
  });
  const auto n = sorted_.size();
  const auto base = n / workers;
  const auto extra = n % workers;
  std::size_t pos = 0;
  for (std::size_t w = 0; w < workers; ++w) {
    const auto len = base + (w < extra ? 1 : 0);
    for (auto i = pos; i < pos + len; ++i) {
      pieces_[w].push_back(RangePiece{sorted_[i].key, *sorted_[i].upper, false, i, nullptr});
    }
    pos += len;
  }
}

void
RangeRun::Fail(std::exception_ptr error)
{
  while (error_lock_.test_and_set(std::memory_order_acquire)) {
  }
  if (error_ == nullptr) error_ = std::move(error);
  error_lock_.clear(std::memory_order_release);
  failed_.store(true, std::memory_order_release);
}

void
RangeRun::Work(const std::size_t w)
{
  auto &mine = pieces_[w];
  try {
    std::vector<Key> lows;
    lows.reserve(mine.size());
    for (const auto &p : mine) lows.push_back(p.lo);
    std::vector<Interception> starts(lows.size(), nullptr);
    TraverseGroup(shard_.index(), lows, shard_.options().group_size, starts);
    for (std::size_t i = 0; i < mine.size(); ++i) mine[i].start = starts[i];
    original_first_[w] = mine.empty() ? nullptr : mine.front().start;
  } catch (...) {
    Fail(std::current_exception());
  }
  traversed_.arrive_and_wait();
  if (failed_.load(std::memory_order_acquire)) return;

  try {
    std::vector<RangePiece> incoming;
    if (w > 0) {
      delivered_[w - 1].wait(false, std::memory_order_acquire);
      incoming = std::move(inbox_[w]);
    }
    auto out = RedistributeRangeStep(mine, std::move(incoming), NextFirst(original_first_, w));
    if (w + 1 < pieces_.size()) inbox_[w + 1] = std::move(out);
  } catch (...) {
    Fail(std::current_exception());
  }
  delivered_[w].store(true, std::memory_order_release);
  delivered_[w].notify_one();
  if (failed_.load(std::memory_order_acquire)) return;

  try {
    for (const auto &p : mine) hits_[w].emplace_back(p.origin, ScanPiece(p, shard_.storage()));
  } catch (...) {
    Fail(std::current_exception());
  }
}

auto
RangeRun::Finish()  //
    -> std::vector<QueryResult>
{
  if (error_ != nullptr) std::rethrow_exception(error_);
  std::vector<std::vector<std::pair<Key, ValueHandle>>> acc(sorted_.size());
  for (auto &worker : hits_) {
    for (auto &[origin, items] : worker) {
      auto &dst = acc[origin];
      dst.insert(dst.end(), items.begin(), items.end());
    }
  }
  std::vector<QueryResult> results;
  results.reserve(sorted_.size());
  for (std::size_t i = 0; i < sorted_.size(); ++i) {
    results.push_back(QueryResult{sorted_[i].seq, RangeHits{std::move(acc[i])}});
  }
  SortBySeq(results);
  return results;
}

auto
RangeRun::FinalPieceCounts() const  //
    -> std::vector<std::size_t>
{
  std::vector<std::size_t> counts;
  counts.reserve(pieces_.size());
  for (const auto &p : pieces_) counts.push_back(p.size());
  return counts;
}

auto
ProcessRangeBatch(  //
    const std::span<const Query> ranges,
    Shard &shard,
    const std::size_t workers,
    WorkerPool *pool)  //
    -> std::vector<QueryResult>
{
  if (workers == 0) throw ConfigError{"at least one worker is required"};
  std::unique_ptr<WorkerPool> local;
  if (pool == nullptr && workers > 1) {
    local = std::make_unique<WorkerPool>(workers);
    pool = local.get();
  }
  RangeRun run{ranges, shard, workers};
  RunOn(pool, workers, [&run](const std::size_t w) { run.Work(w); });
  return run.Finish();
}

}  // namespace piskip
