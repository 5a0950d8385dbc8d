#include "piskip/types.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>

namespace piskip
{
auto
ToString(const QueryType t)  //
    -> const char *
{
  switch (t) {
    case QueryType::kSearch:
      return "search";
    case QueryType::kInsert:
      return "insert";
    case QueryType::kDelete:
      return "delete";
    case QueryType::kRangeSearch:
      return "range";
  }
  return "?";
}

auto
Query::Search(const Key k, const std::uint64_t seq)  //
    -> Query
{
  return Query{QueryType::kSearch, k, std::nullopt, std::nullopt, seq};
}

auto
Query::Insert(const Key k, const ValueHandle v, const std::uint64_t seq)  //
    -> Query
{
  return Query{QueryType::kInsert, k, std::nullopt, v, seq};
}

auto
Query::Delete(const Key k, const std::uint64_t seq)  //
    -> Query
{
  return Query{QueryType::kDelete, k, std::nullopt, std::nullopt, seq};
}

auto
Query::Range(const Key lo, const Key hi, const std::uint64_t seq)  //
    -> Query
{
  return Query{QueryType::kRangeSearch, lo, hi, std::nullopt, seq};
}

namespace
{
void
Validate(const Query &q)
{
  const bool is_insert = q.type == QueryType::kInsert;
  const bool is_range = q.type == QueryType::kRangeSearch;
  if (is_insert != q.value.has_value()) {
    throw std::invalid_argument{"a value must accompany inserts and only inserts"};
  }
  if (is_insert && q.key == kSentinelKey) {
    throw std::invalid_argument{"key 0 is reserved for the head sentinel"};
  }
  if (is_range != q.upper.has_value()) {
    throw std::invalid_argument{"an upper bound must accompany range searches only"};
  }
  if (is_range && *q.upper < q.key) {
    throw std::invalid_argument{"range upper bound is below its lower bound"};
  }
}

auto
KeySeqLess(const Query &a, const Query &b)  //
    -> bool
{
  return a.key != b.key ? a.key < b.key : a.seq < b.seq;
}
}  // namespace

auto
MakeQuerySet(std::vector<Query> queries)  //
    -> QuerySet
{
  for (const auto &q : queries) Validate(q);
  std::stable_sort(queries.begin(), queries.end(), KeySeqLess);
  QuerySet qs;
  qs.queries_ = std::move(queries);
  return qs;
}

auto
FromSortedUnchecked(std::vector<Query> queries)  //
    -> QuerySet
{
  assert(std::is_sorted(queries.begin(), queries.end(), KeySeqLess));
  QuerySet qs;
  qs.queries_ = std::move(queries);
  return qs;
}

auto
ToString(const QueryResult &r)  //
    -> std::string
{
  std::ostringstream os;
  os << "#" << r.seq << " ";
  std::visit(
      [&os](const auto &o) {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, Found>) {
          os << "Found(" << Raw(o.value) << ")";
        } else if constexpr (std::is_same_v<T, NotFound>) {
          os << "NotFound";
        } else if constexpr (std::is_same_v<T, Inserted>) {
          os << "Inserted";
        } else if constexpr (std::is_same_v<T, Updated>) {
          os << "Updated";
        } else if constexpr (std::is_same_v<T, Deleted>) {
          os << "Deleted";
        } else {
          os << "Range[" << o.items.size() << "]";
        }
      },
      r.outcome);
  return os.str();
}

void
SortBySeq(std::vector<QueryResult> &results)
{
  std::sort(results.begin(), results.end(),
            [](const QueryResult &a, const QueryResult &b) { return a.seq < b.seq; });
}

}  // namespace piskip
