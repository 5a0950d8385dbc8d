#include "piskip/partition.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <thread>

#if defined(__linux__)
#include <sched.h>
#endif

namespace piskip
{
namespace
{
constexpr std::uint64_t kKeySpace = std::uint64_t{kMaxKey} + 1;

void
CheckBudget(const std::span<const std::uint64_t> loads, const std::size_t budget,
            const std::size_t capacity)
{
  if (loads.empty()) throw ConfigError{"no partitions"};
  const auto nonempty =
      static_cast<std::size_t>(std::count_if(loads.begin(), loads.end(), [](auto l) {
        return l > 0;
      }));
  if (budget < nonempty) {
    throw ConfigError{"thread budget " + std::to_string(budget) + " is below the "
                      + std::to_string(nonempty) + " partitions with queries"};
  }
  if (capacity > 0 && budget > capacity * loads.size()) {
    throw ConfigError{"thread budget exceeds the capacity of all partitions"};
  }
}

/// Give every loaded partition one thread, taking it from the largest allocation.
void
EnsureOneEach(const std::span<const std::uint64_t> loads, std::vector<std::size_t> &workers)
{
  for (std::size_t p = 0; p < loads.size(); ++p) {
    if (loads[p] == 0 || workers[p] > 0) continue;
    std::size_t donor = loads.size();
    for (std::size_t q = 0; q < loads.size(); ++q) {
      if (workers[q] > 1 && (donor == loads.size() || workers[q] >= workers[donor])) donor = q;
    }
    if (donor == loads.size()) throw ConfigError{"not enough threads for loaded partitions"};
    --workers[donor];
    workers[p] = 1;
  }
}

/// Clamp at capacity and host the excess on the least-loaded partitions with room.
auto
PlaceThreads(const std::span<const std::uint64_t> loads, std::vector<std::size_t> workers,
             const std::size_t capacity)  //
    -> ThreadAllocation
{
  ThreadAllocation a;
  const auto n = loads.size();
  a.hosted_at_owner.resize(n);
  for (std::size_t p = 0; p < n; ++p) {
    a.hosted_at_owner[p] = capacity == 0 ? workers[p] : std::min(workers[p], capacity);
  }
  a.hosted = a.hosted_at_owner;
  for (std::size_t p = 0; p < n; ++p) {
    for (auto extra = workers[p] - a.hosted_at_owner[p]; extra > 0; --extra) {
      std::size_t host = n;
      for (std::size_t q = 0; q < n; ++q) {
        if (a.hosted[q] >= capacity) continue;
        if (host == n || loads[q] < loads[host]) host = q;
      }
      ++a.hosted[host];
      a.offloads.emplace_back(p, host);
    }
  }
  a.workers = std::move(workers);
  return a;
}

void
PinToCpu([[maybe_unused]] const std::size_t cpu)
{
#if defined(__linux__)
  const auto ncpu = std::max(1U, std::thread::hardware_concurrency());
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(static_cast<int>(cpu % ncpu), &set);
  sched_setaffinity(0, sizeof(set), &set);
#endif
}

}  // namespace

/*######################################################################################
 * Thread allocation
 *####################################################################################*/

auto
AllocateThreads(  //
    const std::span<const std::uint64_t> loads,
    const std::size_t budget,
    const std::size_t capacity)  //
    -> ThreadAllocation
{
  CheckBudget(loads, budget, capacity);
  std::uint64_t total = 0;
  for (const auto l : loads) {
    if (l > std::numeric_limits<std::uint64_t>::max() / (budget + 1) - total) {
      throw std::invalid_argument{"partition loads too large"};
    }
    total += l;
  }
  if (total == 0) return EvenThreads(loads, budget, capacity);

  const auto n = loads.size();
  std::vector<std::size_t> workers(n);
  std::vector<std::uint64_t> rem(n);
  std::size_t given = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const auto share = loads[p] * budget;
    workers[p] = static_cast<std::size_t>(share / total);
    rem[p] = share % total;
    given += workers[p];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&rem](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; given < budget; ++i, ++given) ++workers[order[i]];
  EnsureOneEach(loads, workers);
  return PlaceThreads(loads, std::move(workers), capacity);
}

auto
EvenThreads(  //
    const std::span<const std::uint64_t> loads,
    const std::size_t budget,
    const std::size_t capacity)  //
    -> ThreadAllocation
{
  CheckBudget(loads, budget, capacity);
  const auto n = loads.size();
  std::vector<std::size_t> workers(n);
  for (std::size_t p = 0; p < n; ++p) workers[p] = budget / n + (p < budget % n ? 1 : 0);
  EnsureOneEach(loads, workers);
  return PlaceThreads(loads, std::move(workers), capacity);
}

/*######################################################################################
 * PartitionSet
 *####################################################################################*/

auto
PartitionSet::Create(  //
    const std::span<const std::pair<Key, ValueHandle>> pairs,
    const PartitionOptions options,
    WorkerPool *pool)  //
    -> PartitionSet
{
  const auto n = options.partitions;
  if (n == 0) throw ConfigError{"at least one partition is required"};
  if (options.thread_budget == 0) throw ConfigError{"thread budget must be positive"};
  if (!std::is_sorted(pairs.begin(), pairs.end(),
                      [](const auto &a, const auto &b) { return a.first < b.first; })) {
    throw std::invalid_argument{"partition input must be sorted by key"};
  }

  std::vector<Key> lows(n, 0);
  for (std::size_t p = 1; p < n; ++p) {
    lows[p] = pairs.size() >= n ? pairs[p * pairs.size() / n].first
                                : static_cast<Key>(kKeySpace * p / n);
  }

  PartitionSet set;
  set.options_ = options;
  set.parts_.resize(n);
  const auto ncpu = std::max(1U, std::thread::hardware_concurrency());
  const auto build_workers = std::max<std::size_t>(1, options.thread_budget / n);
  std::size_t begin = 0;
  for (std::size_t p = 0; p < n; ++p) {
    auto &part = set.parts_[p];
    part.lo = lows[p];
    part.hi = (p + 1 < n) ? lows[p + 1] : kKeySpace;
    auto end = begin;
    while (end < pairs.size() && pairs[end].first < part.hi) ++end;
    if (options.affinity) part.affinity_hint = p % ncpu;
    part.shard = Shard::Load(pairs.subspan(begin, end - begin), options.shard, build_workers, pool);
    begin = end;
  }
  return set;
}

auto
PartitionSet::PartitionOf(const Key key) const  //
    -> std::size_t
{
  const auto it = std::partition_point(parts_.begin() + 1, parts_.end(),
                                       [key](const Partition &p) { return p.lo <= key; });
  return static_cast<std::size_t>(it - parts_.begin()) - 1;
}

auto
PartitionSet::Route(const QuerySet &qs) const  //
    -> std::vector<QuerySet>
{
  const auto n = parts_.size();
  std::vector<std::vector<Query>> lists(n);
  bool has_ranges = false;
  for (const auto &q : qs) {
    if (q.type != QueryType::kRangeSearch) {
      lists[PartitionOf(q.key)].push_back(q);
      continue;
    }
    has_ranges = true;
    const auto first = PartitionOf(q.key);
    const auto last = PartitionOf(*q.upper);
    for (auto p = first; p <= last; ++p) {
      auto piece = q;
      piece.key = std::max(q.key, parts_[p].lo);
      piece.upper = static_cast<Key>(std::min<std::uint64_t>(*q.upper, parts_[p].hi - 1));
      lists[p].push_back(piece);
    }
  }
  std::vector<QuerySet> out;
  out.reserve(n);
  for (auto &l : lists) {
    // clipped range pieces may land behind later lower bounds
    out.push_back(has_ranges ? MakeQuerySet(std::move(l)) : FromSortedUnchecked(std::move(l)));
  }
  return out;
}

auto
PartitionSet::Allocate(const std::span<const std::uint64_t> loads) const  //
    -> ThreadAllocation
{
  return options_.self_adjust
             ? AllocateThreads(loads, options_.thread_budget, options_.capacity)
             : EvenThreads(loads, options_.thread_budget, options_.capacity);
}

namespace
{
/// One worker slot of a round: which run, which local worker, which host partition.
struct Job {
  std::size_t run;
  std::size_t local;
  std::size_t host;
};

/// Lay out jobs so that remote workers take the highest local ids of their owner's run.
auto
PlanJobs(const ThreadAllocation &a, const std::vector<std::size_t> &run_of)  //
    -> std::vector<Job>
{
  std::vector<Job> jobs;
  std::vector<std::size_t> next_remote(a.workers.size(), 0);
  for (std::size_t p = 0; p < a.workers.size(); ++p) {
    if (run_of[p] == SIZE_MAX) continue;
    for (std::size_t w = 0; w < a.hosted_at_owner[p]; ++w) jobs.push_back({run_of[p], w, p});
  }
  for (const auto &[owner, host] : a.offloads) {
    if (run_of[owner] == SIZE_MAX) continue;
    const auto local = a.hosted_at_owner[owner] + next_remote[owner]++;
    jobs.push_back({run_of[owner], local, host});
  }
  return jobs;
}

}  // namespace

auto
PartitionSet::Process(const QuerySet &qs, WorkerPool &pool, RoundStats *stats)  //
    -> std::vector<QueryResult>
{
  const auto routed = Route(qs);
  const auto n = parts_.size();
  std::vector<std::uint64_t> loads(n);
  for (std::size_t p = 0; p < n; ++p) loads[p] = routed[p].size();
  const auto alloc = Allocate(loads);

  std::vector<std::unique_ptr<BatchRun>> runs;
  std::vector<std::size_t> run_of(n, SIZE_MAX);
  std::vector<std::size_t> owner_of;
  std::vector<TraversalStats> tstats(n);
  std::vector<WalkStats> wstats(n);
  for (std::size_t p = 0; p < n; ++p) {
    if (loads[p] == 0) continue;
    BatchOptions bo{options_.witness, &tstats[p], &wstats[p], {}};
    run_of[p] = runs.size();
    owner_of.push_back(p);
    runs.push_back(std::make_unique<BatchRun>(routed[p], parts_[p].shard, alloc.workers[p], bo));
  }

  const auto jobs = PlanJobs(alloc, run_of);
  pool.Run(jobs.size(), [&](const std::size_t j) {
    const auto &job = jobs[j];
    if (const auto &hint = parts_[job.host].affinity_hint) PinToCpu(*hint);
    runs[job.run]->Work(job.local);
  });

  std::vector<QueryResult> merged;
  merged.reserve(qs.size());
  std::exception_ptr error{};
  RoundStats round;
  round.loads = loads;
  round.allocation = alloc;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto p = owner_of[r];
    try {
      auto res = runs[r]->Finish();
      std::move(res.begin(), res.end(), std::back_inserter(merged));
    } catch (...) {
      if (error == nullptr) error = std::current_exception();
      continue;
    }
    const auto sizes = runs[r]->FinalBatchSizes();
    for (auto w = alloc.hosted_at_owner[p]; w < sizes.size(); ++w) {
      round.offloaded_queries += sizes[w];
    }
    round.ownership.Merge(runs[r]->ownership());
    round.traversal.Merge(tstats[p]);
    round.walk.walks += wstats[p].walks;
    round.walk.nodes += wstats[p].nodes;
  }
  if (error != nullptr) std::rethrow_exception(error);

  if (options_.shard.auto_rebuild) {
    for (const auto p : owner_of) {
      if (parts_[p].shard.MaybeRebuild(alloc.workers[p], &pool)) ++round.rebuilds;
    }
  }
  SortBySeq(merged);
  if (stats != nullptr) *stats = std::move(round);
  return merged;
}

auto
PartitionSet::ProcessRanges(const QuerySet &qs, WorkerPool &pool, RoundStats *stats)  //
    -> std::vector<QueryResult>
{
  for (const auto &q : qs) {
    if (q.type != QueryType::kRangeSearch) {
      throw std::invalid_argument{"ProcessRanges expects range searches only"};
    }
  }
  const auto routed = Route(qs);
  const auto n = parts_.size();
  std::vector<std::uint64_t> loads(n);
  for (std::size_t p = 0; p < n; ++p) loads[p] = routed[p].size();
  const auto alloc = Allocate(loads);

  std::vector<std::unique_ptr<RangeRun>> runs;
  std::vector<std::size_t> run_of(n, SIZE_MAX);
  std::vector<std::size_t> owner_of;
  for (std::size_t p = 0; p < n; ++p) {
    if (loads[p] == 0) continue;
    run_of[p] = runs.size();
    owner_of.push_back(p);
    runs.push_back(
        std::make_unique<RangeRun>(routed[p].queries(), parts_[p].shard, alloc.workers[p]));
  }
  const auto jobs = PlanJobs(alloc, run_of);
  pool.Run(jobs.size(), [&](const std::size_t j) {
    const auto &job = jobs[j];
    if (const auto &hint = parts_[job.host].affinity_hint) PinToCpu(*hint);
    runs[job.run]->Work(job.local);
  });

  // partitions are visited in key order, so per-seq concatenation stays sorted
  std::map<std::uint64_t, RangeHits> by_seq;
  std::exception_ptr error{};
  RoundStats round;
  round.loads = loads;
  round.allocation = alloc;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto p = owner_of[r];
    try {
      for (auto &res : runs[r]->Finish()) {
        auto &items = std::get<RangeHits>(res.outcome).items;
        auto &dst = by_seq[res.seq].items;
        dst.insert(dst.end(), items.begin(), items.end());
      }
    } catch (...) {
      if (error == nullptr) error = std::current_exception();
      continue;
    }
    const auto counts = runs[r]->FinalPieceCounts();
    for (auto w = alloc.hosted_at_owner[p]; w < counts.size(); ++w) {
      round.offloaded_queries += counts[w];
    }
  }
  if (error != nullptr) std::rethrow_exception(error);

  std::vector<QueryResult> merged;
  merged.reserve(by_seq.size());
  for (auto &[seq, hits] : by_seq) merged.push_back(QueryResult{seq, std::move(hits)});
  if (stats != nullptr) *stats = std::move(round);
  return merged;
}

auto
PartitionSet::LivePairs() const  //
    -> std::vector<std::pair<Key, ValueHandle>>
{
  std::vector<std::pair<Key, ValueHandle>> out;
  for (const auto &p : parts_) {
    auto part = p.shard.LivePairs();
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

auto
PartitionSet::TotalRebuilds() const  //
    -> std::uint64_t
{
  std::uint64_t n = 0;
  for (const auto &p : parts_) n += p.shard.rebuilds();
  return n;
}

auto
PartitionSet::TotalRebuildSeconds() const  //
    -> double
{
  double s = 0.0;
  for (const auto &p : parts_) s += p.shard.rebuild_seconds();
  return s;
}

auto
PartitionSet::IndexBytes() const  //
    -> std::size_t
{
  std::size_t bytes = 0;
  for (const auto &p : parts_) bytes += p.shard.index().Bytes();
  return bytes;
}

}  // namespace piskip
