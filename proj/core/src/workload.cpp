#include "piskip/workload.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <utility>

namespace piskip
{
/*######################################################################################
 * Zipf
 *####################################################################################*/

namespace
{
auto
Helper1(const double x)  //
    -> double
{
  return std::abs(x) > 1e-8 ? std::log1p(x) / x : 1.0 - x * (0.5 - x * (1.0 / 3.0 - 0.25 * x));
}

auto
Helper2(const double x)  //
    -> double
{
  return std::abs(x) > 1e-8 ? std::expm1(x) / x
                            : 1.0 + x * 0.5 * (1.0 + x * (1.0 / 3.0) * (1.0 + 0.25 * x));
}

}  // namespace

ZipfSampler::ZipfSampler(const std::uint64_t n, const double theta) : n_{n}, theta_{theta}
{
  if (n == 0) throw ConfigError{"zipf support must be non-empty"};
  if (!(theta >= 0.0) || !std::isfinite(theta)) throw ConfigError{"zipf theta must be >= 0"};
  h_integral_x1_ = HIntegral(1.5) - 1.0;
  h_integral_n_ = HIntegral(static_cast<double>(n) + 0.5);
  s_ = 2.0 - HIntegralInverse(HIntegral(2.5) - H(2.0));
}

auto
ZipfSampler::H(const double x) const  //
    -> double
{
  return std::exp(-theta_ * std::log(x));
}

auto
ZipfSampler::HIntegral(const double x) const  //
    -> double
{
  const auto log_x = std::log(x);
  return Helper2((1.0 - theta_) * log_x) * log_x;
}

auto
ZipfSampler::HIntegralInverse(const double x) const  //
    -> double
{
  auto t = x * (1.0 - theta_);
  if (t < -1.0) t = -1.0;
  return std::exp(Helper1(t) * x);
}

auto
ZipfSampler::Sample(SplitMix64 &rng) const  //
    -> std::uint64_t
{
  if (theta_ == 0.0) {
    return rng.Next() % n_;
  }
  const auto n = static_cast<double>(n_);
  while (true) {
    const auto u = h_integral_n_ + rng.NextDouble() * (h_integral_x1_ - h_integral_n_);
    const auto x = HIntegralInverse(u);
    auto k = std::floor(x + 0.5);
    if (k < 1.0) {
      k = 1.0;
    } else if (k > n) {
      k = n;
    }
    if (k - x <= s_ || u >= HIntegral(k + 0.5) - H(k)) {
      return static_cast<std::uint64_t>(k) - 1U;
    }
  }
}

auto
ZipfPmf(const std::uint64_t n, const double theta, const std::uint64_t k)  //
    -> double
{
  double norm = 0.0;
  for (std::uint64_t i = n; i >= 1; --i) norm += std::pow(static_cast<double>(i), -theta);
  return std::pow(static_cast<double>(k + 1), -theta) / norm;
}

/*######################################################################################
 * Spec and config
 *####################################################################################*/

void
WorkloadSpec::Validate() const
{
  const auto in_unit = [](double r) { return r >= 0.0 && r <= 1.0; };
  if (!in_unit(write_ratio) || !in_unit(delete_ratio)) {
    throw ConfigError{"write and delete ratios must lie in [0, 1]"};
  }
  if (write_ratio + delete_ratio > 1.0 + 1e-12) {
    throw ConfigError{"write ratio + delete ratio must not exceed 1"};
  }
  if (!(zipf_theta >= 0.0)) throw ConfigError{"theta must be >= 0"};
  if (dataset_size == 0 || dataset_size > kMaxKey) {
    throw ConfigError{"dataset size must lie in [1, 2^32 - 1]"};
  }
  if (batch_size == 0) throw ConfigError{"batch size must be positive"};
}

namespace
{
auto
Trim(std::string s)  //
    -> std::string
{
  const auto not_space = [](unsigned char c) { return std::isspace(c) == 0; };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

template <class T>
auto
ParseNumber(const std::string &key, const std::string &text)  //
    -> T
{
  T value{};
  const auto *end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError{"bad value for " + key + ": '" + text + "'"};
  }
  return value;
}

}  // namespace

auto
ParseKeyValues(std::istream &in)  //
    -> std::map<std::string, std::string>
{
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError{"config line " + std::to_string(lineno) + " has no '='"};
    }
    kv[Trim(line.substr(0, eq))] = Trim(line.substr(eq + 1));
  }
  return kv;
}

void
ApplyWorkloadConfig(const std::map<std::string, std::string> &kv, WorkloadSpec &spec)
{
  for (const auto &[k, v] : kv) {
    if (k == "n") {
      spec.dataset_size = ParseNumber<std::uint64_t>(k, v);
    } else if (k == "batch_size") {
      spec.batch_size = ParseNumber<std::size_t>(k, v);
    } else if (k == "write_ratio") {
      spec.write_ratio = ParseNumber<double>(k, v);
    } else if (k == "delete_ratio") {
      spec.delete_ratio = ParseNumber<double>(k, v);
    } else if (k == "theta") {
      spec.zipf_theta = ParseNumber<double>(k, v);
    } else if (k == "seed") {
      spec.seed = ParseNumber<std::uint64_t>(k, v);
    } else if (k == "batches") {
      spec.n_batches = ParseNumber<std::size_t>(k, v);
    } else if (k == "granularity") {
      spec.range_granularity = ParseNumber<std::size_t>(k, v);
    }
  }
}

/*######################################################################################
 * Datasets and generation
 *####################################################################################*/

auto
DatasetValue(const Key key)  //
    -> ValueHandle
{
  return ToHandle(Mix64(key));
}

auto
MakeDataset(const std::uint64_t n)  //
    -> std::vector<std::pair<Key, ValueHandle>>
{
  if (n > kMaxKey) throw ConfigError{"dataset larger than the key space"};
  const auto stride = (std::uint64_t{kMaxKey} + 1) / (n + 1);
  std::vector<std::pair<Key, ValueHandle>> pairs;
  pairs.reserve(n);
  for (std::uint64_t i = 1; i <= n; ++i) {
    const auto key = static_cast<Key>(i * stride);
    pairs.emplace_back(key, DatasetValue(key));
  }
  return pairs;
}

ScramblePermutation::ScramblePermutation(const std::uint64_t n, const std::uint64_t seed)
    : n_{n}, seed_{Mix64(seed)}
{
  if (n == 0) throw ConfigError{"permutation domain must be non-empty"};
  unsigned bits = 2;
  while (bits < 64 && (std::uint64_t{1} << bits) < n) bits += 2;
  half_bits_ = bits / 2;
  half_mask_ = (std::uint64_t{1} << half_bits_) - 1;
}

auto
ScramblePermutation::operator()(std::uint64_t x) const  //
    -> std::uint64_t
{
  if (x >= n_) throw std::out_of_range{"permutation input out of range"};
  // the domain is at most 4n, so cycle walking takes few rounds on average
  do {
    auto left = x >> half_bits_;
    auto right = x & half_mask_;
    for (std::uint64_t round = 0; round < 4; ++round) {
      const auto f = Mix64(right ^ seed_ ^ (round << 56U)) & half_mask_;
      left = std::exchange(right, left ^ f);
    }
    x = (left << half_bits_) | right;
  } while (x >= n_);
  return x;
}

WorkloadGenerator::WorkloadGenerator(WorkloadSpec spec, std::vector<Key> domain)
    : spec_{spec},
      domain_{std::move(domain)},
      zipf_{std::max<std::uint64_t>(1, domain_.size()), spec.zipf_theta},
      scramble_{std::max<std::uint64_t>(1, domain_.size()), spec.seed},
      rng_{Mix64(spec.seed)}
{
  spec_.Validate();
  if (domain_.empty()) throw ConfigError{"workload needs a non-empty key domain"};
  if (!std::is_sorted(domain_.begin(), domain_.end())) {
    throw std::invalid_argument{"workload key domain must be sorted"};
  }
}

auto
WorkloadGenerator::DrawItem()  //
    -> std::uint64_t
{
  const auto rank = zipf_.Sample(rng_);
  return scramble_(rank);
}

auto
WorkloadGenerator::NextBatch()  //
    -> QuerySet
{
  std::vector<Query> queries;
  queries.reserve(spec_.batch_size);
  const auto n = domain_.size();
  for (std::uint64_t seq = 0; seq < spec_.batch_size; ++seq) {
    const auto item = DrawItem();
    const auto key = domain_[item];
    if (spec_.range_granularity > 0) {
      const auto last = std::min<std::uint64_t>(item + spec_.range_granularity - 1, n - 1);
      queries.push_back(Query::Range(key, domain_[last], seq));
      continue;
    }
    const auto u = rng_.NextDouble();
    if (u < spec_.write_ratio) {
      const std::uint64_t next = item + 1 < n ? domain_[item + 1] : std::uint64_t{kMaxKey} + 1;
      const auto gap = next - key;
      const auto fresh = gap > 1 ? key + 1 + rng_.Next() % (gap - 1) : key;
      queries.push_back(Query::Insert(static_cast<Key>(fresh), ToHandle(rng_.Next()), seq));
    } else if (u < spec_.write_ratio + spec_.delete_ratio) {
      queries.push_back(Query::Delete(key, seq));
    } else {
      queries.push_back(Query::Search(key, seq));
    }
  }
  return MakeQuerySet(std::move(queries));
}

/*######################################################################################
 * Oracle
 *####################################################################################*/

OracleIndex::OracleIndex(const std::span<const std::pair<Key, ValueHandle>> pairs)
{
  for (const auto &[k, v] : pairs) map_.insert_or_assign(k, Record{v, false});
}

auto
OracleIndex::Apply(const Query &q)  //
    -> QueryResult
{
  QueryResult r{q.seq, NotFound{}};
  switch (q.type) {
    case QueryType::kSearch:
      if (const auto it = map_.find(q.key); it != map_.end() && !it->second.deleted) {
        r.outcome = Found{it->second.value};
      }
      break;
    case QueryType::kInsert: {
      const auto [it, fresh] = map_.try_emplace(q.key, Record{*q.value, false});
      if (fresh) {
        r.outcome = Inserted{};
      } else {
        r.outcome = it->second.deleted ? Outcome{Inserted{}} : Outcome{Updated{}};
        it->second = Record{*q.value, false};
      }
      break;
    }
    case QueryType::kDelete:
      if (const auto it = map_.find(q.key); it != map_.end() && !it->second.deleted) {
        it->second.deleted = true;
        r.outcome = Deleted{};
      }
      break;
    case QueryType::kRangeSearch: {
      RangeHits hits;
      for (auto it = map_.lower_bound(q.key); it != map_.end() && it->first <= *q.upper; ++it) {
        if (!it->second.deleted) hits.items.emplace_back(it->first, it->second.value);
      }
      r.outcome = std::move(hits);
      break;
    }
  }
  return r;
}

auto
OracleIndex::ApplyAll(const QuerySet &qs)  //
    -> std::vector<QueryResult>
{
  std::vector<const Query *> order;
  order.reserve(qs.size());
  for (const auto &q : qs) order.push_back(&q);
  std::stable_sort(order.begin(), order.end(),
                   [](const Query *a, const Query *b) { return a->seq < b->seq; });
  std::vector<QueryResult> results;
  results.reserve(order.size());
  for (const auto *q : order) results.push_back(Apply(*q));
  return results;
}

auto
OracleIndex::LivePairs() const  //
    -> std::vector<std::pair<Key, ValueHandle>>
{
  std::vector<std::pair<Key, ValueHandle>> out;
  for (const auto &[k, rec] : map_) {
    if (!rec.deleted) out.emplace_back(k, rec.value);
  }
  return out;
}

auto
OracleIndex::LiveCount() const  //
    -> std::size_t
{
  return static_cast<std::size_t>(
      std::count_if(map_.begin(), map_.end(), [](const auto &e) { return !e.second.deleted; }));
}

/*######################################################################################
 * Persistence
 *####################################################################################*/

namespace
{
constexpr std::array<char, 8> kTraceMagic{'P', 'I', 'T', 'R', 'A', 'C', 'E', '1'};
constexpr std::array<char, 8> kPairsMagic{'P', 'I', 'P', 'A', 'I', 'R', 'S', '1'};

template <class T>
void
PutLE(std::ostream &out, T v)
{
  std::array<char, sizeof(T)> buf{};
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<char>(static_cast<std::uint64_t>(v) >> (8U * i));
  }
  out.write(buf.data(), buf.size());
}

template <class T>
auto
GetLE(std::istream &in)  //
    -> T
{
  std::array<unsigned char, sizeof(T)> buf{};
  in.read(reinterpret_cast<char *>(buf.data()), buf.size());
  if (!in) throw std::runtime_error{"unexpected end of binary input"};
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t{buf[i]} << (8U * i);
  return static_cast<T>(v);
}

void
ExpectMagic(std::istream &in, const std::array<char, 8> &magic)
{
  std::array<char, 8> got{};
  in.read(got.data(), got.size());
  if (!in || got != magic) throw std::runtime_error{"bad file magic"};
}

}  // namespace

void
WriteTrace(std::ostream &out, const std::span<const QuerySet> batches)
{
  out.write(kTraceMagic.data(), kTraceMagic.size());
  PutLE<std::uint64_t>(out, batches.size());
  for (const auto &qs : batches) {
    PutLE<std::uint64_t>(out, qs.size());
    for (const auto &q : qs) {
      PutLE<std::uint8_t>(out, static_cast<std::uint8_t>(q.type));
      PutLE<std::uint8_t>(out, static_cast<std::uint8_t>((q.upper ? 1U : 0U)
                                                         | (q.value ? 2U : 0U)));
      PutLE<std::uint32_t>(out, q.key);
      PutLE<std::uint32_t>(out, q.upper.value_or(0));
      PutLE<std::uint64_t>(out, q.value ? Raw(*q.value) : 0);
      PutLE<std::uint64_t>(out, q.seq);
    }
  }
}

auto
ReadTrace(std::istream &in)  //
    -> std::vector<QuerySet>
{
  ExpectMagic(in, kTraceMagic);
  const auto n_batches = GetLE<std::uint64_t>(in);
  std::vector<QuerySet> batches;
  for (std::uint64_t b = 0; b < n_batches; ++b) {
    const auto n = GetLE<std::uint64_t>(in);
    std::vector<Query> queries;
    for (std::uint64_t i = 0; i < n; ++i) {
      Query q;
      const auto type = GetLE<std::uint8_t>(in);
      if (type > static_cast<std::uint8_t>(QueryType::kRangeSearch)) {
        throw std::runtime_error{"bad query type in trace"};
      }
      q.type = static_cast<QueryType>(type);
      const auto flags = GetLE<std::uint8_t>(in);
      q.key = GetLE<std::uint32_t>(in);
      const auto upper = GetLE<std::uint32_t>(in);
      const auto value = GetLE<std::uint64_t>(in);
      q.seq = GetLE<std::uint64_t>(in);
      if ((flags & 1U) != 0) q.upper = upper;
      if ((flags & 2U) != 0) q.value = ToHandle(value);
      queries.push_back(q);
    }
    batches.push_back(MakeQuerySet(std::move(queries)));
  }
  return batches;
}

auto
ReadPairsCsv(std::istream &in)  //
    -> std::vector<std::pair<Key, ValueHandle>>
{
  std::vector<std::pair<Key, ValueHandle>> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = Trim(line);
    if (line.empty()) continue;
    if (lineno == 1 && std::isalpha(static_cast<unsigned char>(line.front())) != 0) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw std::runtime_error{"csv line " + std::to_string(lineno) + " lacks a comma"};
    }
    const auto key = ParseNumber<Key>("key", Trim(line.substr(0, comma)));
    const auto value = ParseNumber<std::uint64_t>("value", Trim(line.substr(comma + 1)));
    pairs.emplace_back(key, ToHandle(value));
  }
  return pairs;
}

void
WritePairsCsv(std::ostream &out, const std::span<const std::pair<Key, ValueHandle>> pairs)
{
  out << "key,value\n";
  for (const auto &[k, v] : pairs) out << k << ',' << Raw(v) << '\n';
}

auto
ReadPairsBinary(std::istream &in)  //
    -> std::vector<std::pair<Key, ValueHandle>>
{
  ExpectMagic(in, kPairsMagic);
  const auto n = GetLE<std::uint64_t>(in);
  std::vector<std::pair<Key, ValueHandle>> pairs;
  pairs.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1U << 26U)));
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto key = GetLE<std::uint32_t>(in);
    const auto value = GetLE<std::uint64_t>(in);
    pairs.emplace_back(key, ToHandle(value));
  }
  return pairs;
}

void
WritePairsBinary(std::ostream &out, const std::span<const std::pair<Key, ValueHandle>> pairs)
{
  out.write(kPairsMagic.data(), kPairsMagic.size());
  PutLE<std::uint64_t>(out, pairs.size());
  for (const auto &[k, v] : pairs) {
    PutLE<std::uint32_t>(out, k);
    PutLE<std::uint64_t>(out, Raw(v));
  }
}

auto
LoadPairsFile(const std::string &path)  //
    -> std::vector<std::pair<Key, ValueHandle>>
{
  const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
  std::ifstream in{path, csv ? std::ios::in : std::ios::binary};
  if (!in) throw std::runtime_error{"cannot open " + path};
  return csv ? ReadPairsCsv(in) : ReadPairsBinary(in);
}

void
SavePairsFile(const std::string &path, const std::span<const std::pair<Key, ValueHandle>> pairs)
{
  const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
  std::ofstream out{path, csv ? std::ios::out : std::ios::binary};
  if (!out) throw std::runtime_error{"cannot write " + path};
  if (csv) {
    WritePairsCsv(out, pairs);
  } else {
    WritePairsBinary(out, pairs);
  }
}

}  // namespace piskip
