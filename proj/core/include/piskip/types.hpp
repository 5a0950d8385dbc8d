#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace piskip
{
/*######################################################################################
 * Keys and values
 *####################################################################################*/

/// Index keys are 4-byte unsigned integers so that one 128-bit lane holds four of them.
using Key = std::uint32_t;

/// Reserved for the head sentinel; never stored as user data.
inline constexpr Key kSentinelKey = 0;
inline constexpr Key kMaxKey = std::numeric_limits<Key>::max();

/// Opaque token standing for a pointer to the record associated with a key.
enum class ValueHandle : std::uint64_t {};

constexpr auto
ToHandle(const std::uint64_t raw)  //
    -> ValueHandle
{
  return static_cast<ValueHandle>(raw);
}

constexpr auto
Raw(const ValueHandle v)  //
    -> std::uint64_t
{
  return static_cast<std::uint64_t>(v);
}

/*######################################################################################
 * Errors
 *####################################################################################*/

/// Raised when a structural invariant of the storage or index layer is violated.
class CorruptionError : public std::logic_error
{
 public:
  using std::logic_error::logic_error;
};

/// Raised for unusable configurations (thread budgets, partition counts, ...).
class ConfigError : public std::invalid_argument
{
 public:
  using std::invalid_argument::invalid_argument;
};

/*######################################################################################
 * Queries
 *####################################################################################*/

enum class QueryType : std::uint8_t {
  kSearch = 0,
  kInsert = 1,
  kDelete = 2,
  kRangeSearch = 3,
};

auto ToString(QueryType t) -> const char *;

struct Query {
  QueryType type{QueryType::kSearch};
  /// Point key, or the inclusive lower bound of a range.
  Key key{};
  /// Inclusive upper bound; present only for range searches.
  std::optional<Key> upper{};
  /// Present only for inserts.
  std::optional<ValueHandle> value{};
  /// Arrival order within one query set.
  std::uint64_t seq{};

  static auto Search(Key k, std::uint64_t seq) -> Query;
  static auto Insert(Key k, ValueHandle v, std::uint64_t seq) -> Query;
  static auto Delete(Key k, std::uint64_t seq) -> Query;
  static auto Range(Key lo, Key hi, std::uint64_t seq) -> Query;

  friend auto operator==(const Query &, const Query &) -> bool = default;
};

/**
 * @brief A key-sorted list of queries.
 *
 * Queries sharing a key keep their arrival (seq) order, so a set can be executed
 * front-to-back with serial semantics.
 */
class QuerySet
{
 public:
  QuerySet() = default;

  [[nodiscard]] auto
  queries() const  //
      -> std::span<const Query>
  {
    return queries_;
  }

  [[nodiscard]] auto
  size() const  //
      -> std::size_t
  {
    return queries_.size();
  }

  [[nodiscard]] auto
  empty() const  //
      -> bool
  {
    return queries_.empty();
  }

  auto
  operator[](const std::size_t i) const  //
      -> const Query &
  {
    return queries_[i];
  }

  [[nodiscard]] auto begin() const { return queries_.begin(); }
  [[nodiscard]] auto end() const { return queries_.end(); }

 private:
  friend auto MakeQuerySet(std::vector<Query> queries) -> QuerySet;
  friend auto FromSortedUnchecked(std::vector<Query> queries) -> QuerySet;

  std::vector<Query> queries_{};
};

/**
 * @brief Validate and stably sort queries by (key, seq).
 *
 * @throws std::invalid_argument for an insert without value or with the reserved key,
 *         a range with upper < lower, or a value/upper attached to the wrong type.
 */
auto MakeQuerySet(std::vector<Query> queries) -> QuerySet;

/// Wrap an already-sorted list (used on partition slices); checked in debug builds.
auto FromSortedUnchecked(std::vector<Query> queries) -> QuerySet;

/*######################################################################################
 * Results
 *####################################################################################*/

struct Found {
  ValueHandle value;
  friend auto operator==(const Found &, const Found &) -> bool = default;
};
struct NotFound {
  friend auto operator==(const NotFound &, const NotFound &) -> bool = default;
};
struct Inserted {
  friend auto operator==(const Inserted &, const Inserted &) -> bool = default;
};
struct Updated {
  friend auto operator==(const Updated &, const Updated &) -> bool = default;
};
struct Deleted {
  friend auto operator==(const Deleted &, const Deleted &) -> bool = default;
};
struct RangeHits {
  std::vector<std::pair<Key, ValueHandle>> items;
  friend auto operator==(const RangeHits &, const RangeHits &) -> bool = default;
};

using Outcome = std::variant<Found, NotFound, Inserted, Updated, Deleted, RangeHits>;

struct QueryResult {
  std::uint64_t seq{};
  Outcome outcome{NotFound{}};

  friend auto operator==(const QueryResult &, const QueryResult &) -> bool = default;
};

auto ToString(const QueryResult &r) -> std::string;

/// Sort results by seq in place (submission order).
void SortBySeq(std::vector<QueryResult> &results);

}  // namespace piskip
