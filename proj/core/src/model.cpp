#include "piskip/model.hpp"

#include <algorithm>
#include <cmath>

#include "piskip/types.hpp"

namespace piskip
{
namespace
{
/// ceil that ignores floating noise just above an integer.
auto
Ceil(const double x)  //
    -> double
{
  return std::ceil(x - 1e-9);
}

}  // namespace

auto
ModelHeight(const double n, const double p)  //
    -> std::size_t
{
  if (!(p > 0.0 && p < 1.0)) throw ConfigError{"P must lie in (0, 1)"};
  if (n <= 1.0) return 1;
  const auto h = Ceil(std::log(n) / std::log(1.0 / p));
  return std::max<std::size_t>(1, static_cast<std::size_t>(h));
}

auto
CostModelParams::EffectiveHeight() const  //
    -> std::size_t
{
  return H > 0 ? H : ModelHeight(N, P);
}

void
CostModelParams::Validate() const
{
  if (!(P > 0.0 && P < 1.0)) throw ConfigError{"P must lie in (0, 1)"};
  if (M == 0) throw ConfigError{"M must be positive"};
  if (!(L > 0.0 && N > 0.0 && S_e > 0.0 && S_n > 0.0 && S_l > 0.0 && S_c > 0.0 && T_c > 0.0)) {
    throw ConfigError{"model sizes and times must be positive"};
  }
  if (R < 0.0) throw ConfigError{"R must be non-negative"};
}

auto
KeysPerLevel(const double p)  //
    -> double
{
  return (1.0 + p) / (2.0 * p);
}

auto
EntriesPerLevel(const double p, const std::size_t m)  //
    -> double
{
  return Ceil(KeysPerLevel(p) / static_cast<double>(m));
}

auto
SearchCacheLines(const CostModelParams &params)  //
    -> CacheLines
{
  params.Validate();
  const auto levels = static_cast<double>(params.EffectiveHeight() - 1);
  CacheLines lines;
  lines.index = levels * Ceil(params.S_e / params.S_l) * EntriesPerLevel(params.P, params.M);
  lines.storage = Ceil(params.S_n / params.S_l) * Ceil(KeysPerLevel(params.P));
  return lines;
}

auto
SearchCacheLinesAsWritten(const CostModelParams &params)  //
    -> CacheLines
{
  auto lines = SearchCacheLines(params);
  lines.storage = Ceil(params.S_n / params.S_l) * EntriesPerLevel(params.P, params.M);
  return lines;
}

auto
SearchTime(const CostModelParams &params)  //
    -> double
{
  return SearchCacheLines(params).total() * params.T_c;
}

auto
ScanLengthWithInserts(const double i, const double r, const double n, const double p)  //
    -> double
{
  return (1.0 + i * r / n) * KeysPerLevel(p);
}

auto
RebuildTime(const double n, const double p, const double l)  //
    -> double
{
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError{"P must lie in [0, 1)"};
  return (1.0 + p) * n * l / (1.0 - p);
}

auto
FormulaIndexBytes(const CostModelParams &params)  //
    -> double
{
  return params.S_n * params.N + params.P / (1.0 - params.P) * params.S_e * params.N;
}

auto
LayoutIndexBytes(const double n, const double p, const std::size_t m)  //
    -> double
{
  const auto entry_bytes = static_cast<double>(m * sizeof(Key) + (m + 1) * 8);
  double bytes = 0.0;
  for (auto keys = n * p; keys >= 1.0; keys *= p) {
    bytes += Ceil((keys + 1.0) / static_cast<double>(m)) * entry_bytes;
  }
  return std::max(bytes, entry_bytes);
}

auto
FitsInCache(const CostModelParams &params, const double bytes)  //
    -> bool
{
  return bytes <= params.S_c;
}

auto
ModelTable(const CostModelParams &params)  //
    -> std::vector<std::pair<std::string, double>>
{
  const auto lines = SearchCacheLines(params);
  const auto written = SearchCacheLinesAsWritten(params);
  const auto formula_bytes = FormulaIndexBytes(params);
  return {
      {"height", static_cast<double>(params.EffectiveHeight())},
      {"index_levels", static_cast<double>(params.EffectiveHeight() - 1)},
      {"keys_per_level", KeysPerLevel(params.P)},
      {"entries_per_level", EntriesPerLevel(params.P, params.M)},
      {"index_lines", lines.index},
      {"storage_lines", lines.storage},
      {"total_lines", lines.total()},
      {"storage_lines_as_written", written.storage},
      {"total_lines_as_written", written.total()},
      {"search_time_ns", SearchTime(params)},
      {"scan_length", ScanLengthWithInserts(0.0, params.R, params.N, params.P)},
      {"rebuild_time_ns", RebuildTime(params.N, params.P, params.L)},
      {"formula_bytes", formula_bytes},
      {"layout_index_bytes", LayoutIndexBytes(params.N, params.P, params.M)},
      {"formula_fits_cache", FitsInCache(params, formula_bytes) ? 1.0 : 0.0},
  };
}

}  // namespace piskip
