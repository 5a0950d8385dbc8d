#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace piskip
{
/// Symbols of the analytic cost model. Sizes are bytes, times nanoseconds.
struct CostModelParams {
  /// Index height including the storage layer; 0 derives it from N and P.
  std::size_t H{0};
  double P{0.25};
  std::size_t M{4};
  /// Memory access latency.
  double L{100.0};
  /// Initial data nodes.
  double N{512.0 * 1024.0};
  /// Insert ratio among processed queries.
  double R{0.0};
  double S_e{48.0};
  double S_n{20.0};
  double S_l{64.0};
  /// Last-level cache size.
  double S_c{18.0 * 1024.0 * 1024.0};
  /// Time to read one cache line from the last-level cache.
  double T_c{20.0};

  /// H if set, otherwise Height(N, P).
  [[nodiscard]] auto EffectiveHeight() const -> std::size_t;

  /// @throws ConfigError unless every symbol is positive and P lies in (0, 1).
  void Validate() const;
};

/// ceil(-log_P N), at least 1.
auto ModelHeight(double n, double p) -> std::size_t;

/// Mean keys compared per level before descending: (1+P)/(2P).
auto KeysPerLevel(double p) -> double;

/// Entries compared per index level: ceil((1+P)/(2PM)).
auto EntriesPerLevel(double p, std::size_t m) -> double;

struct CacheLines {
  double index{0.0};
  double storage{0.0};

  [[nodiscard]] auto
  total() const  //
      -> double
  {
    return index + storage;
  }
};

/**
 * @brief Cache lines read per search.
 *
 * Index: (H-1) ceil(S_e/S_l) ceil((1+P)/(2PM)). Storage: ceil(S_n/S_l) lines for each of
 * ceil((1+P)/(2P)) data nodes.
 */
auto SearchCacheLines(const CostModelParams &params) -> CacheLines;

/// Same, with the storage term taken literally as ceil(S_n/S_l) ceil((1+P)/(2PM)).
auto SearchCacheLinesAsWritten(const CostModelParams &params) -> CacheLines;

/// Search time when the index fits the last-level cache: lines x T_c.
auto SearchTime(const CostModelParams &params) -> double;

/// Data nodes scanned per search after i queries with insert ratio R: (1+iR/N)(1+P)/(2P).
auto ScanLengthWithInserts(double i, double r, double n, double p) -> double;

/// Single-threaded rebuild time (1+P) N L / (1-P), in the unit of L.
auto RebuildTime(double n, double p, double l) -> double;

/// Size estimate S_n N + P/(1-P) S_e N (one entry charged per elevated key).
auto FormulaIndexBytes(const CostModelParams &params) -> double;

/**
 * @brief Expected bytes of this implementation's index layer: per level
 * ceil((N P^l + 1) / M) entries of M keys and M+1 eight-byte slots.
 */
auto LayoutIndexBytes(double n, double p, std::size_t m) -> double;

/// Whether `bytes` fit the last-level cache of `params`.
auto FitsInCache(const CostModelParams &params, double bytes) -> bool;

/// Named model outputs for tabular printing.
auto ModelTable(const CostModelParams &params) -> std::vector<std::pair<std::string, double>>;

}  // namespace piskip
