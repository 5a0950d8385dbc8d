#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "piskip/hash.hpp"
#include "piskip/types.hpp"

namespace piskip
{
/*######################################################################################
 * Zipfian sampling
 *####################################################################################*/

/**
 * @brief Zipf(n, theta) over ranks [0, n), rank 0 the most popular.
 *
 * Rejection-inversion sampling (Hoermann and Derflinger), exact for any theta >= 0 and
 * O(1) per draw without precomputed tables. theta = 0 is uniform.
 */
class ZipfSampler
{
 public:
  ZipfSampler(std::uint64_t n, double theta);

  auto Sample(SplitMix64 &rng) const -> std::uint64_t;

  [[nodiscard]] auto
  n() const  //
      -> std::uint64_t
  {
    return n_;
  }

  [[nodiscard]] auto
  theta() const  //
      -> double
  {
    return theta_;
  }

 private:
  [[nodiscard]] auto H(double x) const -> double;
  [[nodiscard]] auto HIntegral(double x) const -> double;
  [[nodiscard]] auto HIntegralInverse(double x) const -> double;

  std::uint64_t n_;
  double theta_;
  double h_integral_x1_{};
  double h_integral_n_{};
  double s_{};
};

/// Exact Zipf pmf for rank k in [0, n) (reference for statistical tests).
auto ZipfPmf(std::uint64_t n, double theta, std::uint64_t k) -> double;

/**
 * @brief Keyed bijection on [0, n): a balanced Feistel network over the smallest even
 * bit width covering n, with cycle walking back into range.
 */
class ScramblePermutation
{
 public:
  ScramblePermutation(std::uint64_t n, std::uint64_t seed);

  [[nodiscard]] auto operator()(std::uint64_t x) const -> std::uint64_t;

 private:
  std::uint64_t n_;
  std::uint64_t seed_;
  unsigned half_bits_{1};
  std::uint64_t half_mask_{1};
};

/*######################################################################################
 * Workload specification
 *####################################################################################*/

struct WorkloadSpec {
  std::uint64_t dataset_size{1U << 20U};
  std::size_t batch_size{8192};
  /// Fraction of inserts.
  double write_ratio{0.0};
  /// Fraction of deletes.
  double delete_ratio{0.0};
  double zipf_theta{0.0};
  std::uint64_t seed{1};
  std::size_t n_batches{16};
  /// Target result count per range search; 0 generates point queries.
  std::size_t range_granularity{0};

  /// @throws ConfigError for ratios outside [0, 1], ratio sums above 1 or theta < 0.
  void Validate() const;
};

/// Parse "key = value" lines ('#' starts a comment) into a map.
auto ParseKeyValues(std::istream &in) -> std::map<std::string, std::string>;

/**
 * @brief Apply the workload keys of a parsed config, leaving others untouched.
 *
 * Recognized keys: n, batch_size, write_ratio, delete_ratio, theta, seed, batches,
 * granularity.
 */
void ApplyWorkloadConfig(const std::map<std::string, std::string> &kv, WorkloadSpec &spec);

/*######################################################################################
 * Datasets and query generation
 *####################################################################################*/

/// The value handle stored for a key loaded from a synthetic dataset.
auto DatasetValue(Key key) -> ValueHandle;

/**
 * @brief `n` sorted distinct keys spread evenly over the key space, leaving gaps for
 * inserts; values are DatasetValue(key).
 */
auto MakeDataset(std::uint64_t n) -> std::vector<std::pair<Key, ValueHandle>>;

/**
 * @brief Deterministic query stream over a loaded key domain.
 *
 * Ranks are drawn zipfian and scrambled onto dataset items, so hot keys are spread
 * over the whole key range. Inserts pick a fresh key in the gap after the drawn item.
 */
class WorkloadGenerator
{
 public:
  WorkloadGenerator(WorkloadSpec spec, std::vector<Key> domain);

  /// Next batch as a sorted query set; seq numbers run 0..batch_size-1.
  auto NextBatch() -> QuerySet;

  /// Dataset item index as drawn for searches (for distribution tests).
  auto DrawItem() -> std::uint64_t;

  [[nodiscard]] auto
  spec() const  //
      -> const WorkloadSpec &
  {
    return spec_;
  }

 private:
  WorkloadSpec spec_;
  std::vector<Key> domain_;
  ZipfSampler zipf_;
  ScramblePermutation scramble_;
  SplitMix64 rng_;
};

/*######################################################################################
 * Reference oracle
 *####################################################################################*/

/**
 * @brief Sequential ordered-map model of the index, tombstones included.
 *
 * Result rules: inserts on a live key report Updated, inserts on a tombstoned key
 * revive it and report Inserted, deletes only report Deleted for live keys.
 */
class OracleIndex
{
 public:
  OracleIndex() = default;
  explicit OracleIndex(std::span<const std::pair<Key, ValueHandle>> pairs);

  auto Apply(const Query &q) -> QueryResult;

  /// Apply a query set in seq order; results come back in seq order.
  auto ApplyAll(const QuerySet &qs) -> std::vector<QueryResult>;

  [[nodiscard]] auto LivePairs() const -> std::vector<std::pair<Key, ValueHandle>>;

  [[nodiscard]] auto LiveCount() const -> std::size_t;

 private:
  struct Record {
    ValueHandle value;
    bool deleted;
  };
  std::map<Key, Record> map_{};
};

/*######################################################################################
 * Persistence
 *####################################################################################*/

/// Binary trace: magic, batch count, then per batch a query count and fixed-size records.
void WriteTrace(std::ostream &out, std::span<const QuerySet> batches);
auto ReadTrace(std::istream &in) -> std::vector<QuerySet>;

/// "key,value" lines; an optional header line starting with a letter is skipped.
auto ReadPairsCsv(std::istream &in) -> std::vector<std::pair<Key, ValueHandle>>;
void WritePairsCsv(std::ostream &out, std::span<const std::pair<Key, ValueHandle>> pairs);

/// Binary pairs: magic, count, then (u32 key, u64 value) records, little endian.
auto ReadPairsBinary(std::istream &in) -> std::vector<std::pair<Key, ValueHandle>>;
void WritePairsBinary(std::ostream &out, std::span<const std::pair<Key, ValueHandle>> pairs);

/// Pick the reader by file extension (".csv" or binary otherwise).
auto LoadPairsFile(const std::string &path) -> std::vector<std::pair<Key, ValueHandle>>;
void SavePairsFile(const std::string &path, std::span<const std::pair<Key, ValueHandle>> pairs);

}  // namespace piskip
