#include "memgrain/its.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <exception>
#include <thread>

#include "memgrain/error.hpp"

namespace memgrain {

namespace {

constexpr char kHexDigits[] = "0123456789abcdef";

void require_same_dimension(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::kDimensionMismatch, std::string(what) + ": dimension " +
                                                   std::to_string(a) + " vs " + std::to_string(b));
  }
}

double binary_entropy(double p) { return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p); }

struct Survivor {
  std::uint64_t matched;
  const MemoryRecord* record;
};

// (score desc, created_at desc, id asc). Within one query every score shares
// the same denominator, so comparing matched weight compares scores.
bool ranks_before(const Survivor& a, const Survivor& b) {
  if (a.matched != b.matched) return a.matched > b.matched;
  if (a.record->created_at != b.record->created_at) return a.record->created_at > b.record->created_at;
  return a.record->id < b.record->id;
}

}  // namespace

BinaryCode::BinaryCode(std::size_t dimension) {
  if (dimension == 0 || dimension % 8 != 0) {
    throw Error(ErrorCode::kInvalidArgument, "code dimension must be a positive multiple of 8");
  }
  bytes_.assign(dimension / 8, 0);
}

BinaryCode BinaryCode::from_bytes(std::vector<std::uint8_t> bytes) {
  BinaryCode code;
  code.bytes_ = std::move(bytes);
  return code;
}

BinaryCode BinaryCode::from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw Error(ErrorCode::kInvalidArgument, "odd-length code hex");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    throw Error(ErrorCode::kInvalidArgument, "non-hex character in code");
  };
  std::vector<std::uint8_t> bytes(hex.size() / 2);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<std::uint8_t>((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
  }
  return from_bytes(std::move(bytes));
}

void BinaryCode::set_bit(std::size_t i, bool value) {
  const auto mask = static_cast<std::uint8_t>(1u << (i % 8));
  if (value) {
    bytes_[i / 8] |= mask;
  } else {
    bytes_[i / 8] &= static_cast<std::uint8_t>(~mask);
  }
}

std::string BinaryCode::hex() const {
  std::string out;
  out.reserve(bytes_.size() * 2);
  for (auto b : bytes_) {
    out.push_back(kHexDigits[b >> 4]);
    out.push_back(kHexDigits[b & 0xF]);
  }
  return out;
}

BinaryCode binarize(const Embedding& e) {
  BinaryCode code(e.dimension());
  for (std::size_t i = 0; i < e.dimension(); ++i) {
    if (e[i] > 0.0) code.set_bit(i, true);
  }
  return code;
}

BinaryCode binarize(const Embedding& e, std::size_t dimension) {
  require_same_dimension(e.dimension(), dimension, "binarize");
  return binarize(e);
}

void accumulate(BitStats& stats, const BinaryCode& code) {
  require_same_dimension(code.dimension(), stats.dimension(), "update_stats");
  const auto* bytes = code.data();
  for (std::size_t j = 0; j < code.byte_size(); ++j) {
    unsigned b = bytes[j];
    while (b != 0) {
      const int k = std::countr_zero(b);
      ++stats.counts[j * 8 + static_cast<std::size_t>(k)];
      b &= b - 1;
    }
  }
  ++stats.n;
}

BitStats update_stats(BitStats stats, const BinaryCode& code) {
  accumulate(stats, code);
  return stats;
}

std::vector<double> bit_weights(const BitStats& stats) {
  std::vector<double> w(stats.dimension());
  const double denom = static_cast<double>(stats.n) + 2.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = binary_entropy((static_cast<double>(stats.counts[i]) + 1.0) / denom);
  }
  return w;
}

ScoringWeights::ScoringWeights(std::span<const double> weights) {
  const std::size_t dim = weights.size();
  if (dim == 0 || dim % 8 != 0 || dim > kMaxDimension) {
    throw Error(ErrorCode::kInvalidArgument, "weight vector length must be a positive multiple of 8");
  }
  quantized_.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const double w = weights[i];
    if (!(w > 0.0) || w > 1.0) {
      throw Error(ErrorCode::kInvalidArgument, "bit weights must lie in (0, 1]");
    }
    quantized_[i] = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(w * kScale)));
    total_ += quantized_[i];
  }
  const std::size_t bytes = dim / 8;
  table_.assign(bytes * 256, 0);
  for (std::size_t j = 0; j < bytes; ++j) {
    std::uint64_t* row = table_.data() + j * 256;
    for (unsigned m = 1; m < 256; ++m) {
      row[m] = row[m & (m - 1)] + quantized_[j * 8 + static_cast<std::size_t>(std::countr_zero(m))];
    }
  }
}

double its_score(const BinaryCode& q, const BinaryCode& d, const ScoringWeights& w) {
  require_same_dimension(q.dimension(), d.dimension(), "its_score");
  require_same_dimension(q.dimension(), w.dimension(), "its_score weights");
  return w.score_of(w.matched(q.data(), d.data()));
}

double its_score(const BinaryCode& q, const BinaryCode& d, std::span<const double> w) {
  require_same_dimension(q.dimension(), d.dimension(), "its_score");
  require_same_dimension(q.dimension(), w.size(), "its_score weights");
  return its_score(q, d, ScoringWeights(w));
}

void RetrievalParams::validate() const {
  if (max_k < 1) throw Error(ErrorCode::kInvalidArgument, "max_k must be >= 1");
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "threshold must lie in [0, 1]");
  }
}

bool admits(const RetrievalParams& params, const MemoryRecord& record) {
  if (params.types && !params.types->empty() && !params.types->contains(record.type)) return false;
  if (record.state == RecordState::kProvisional || record.state == RecordState::kRetired) return false;
  if (params.as_of) {
    const TimestampMs t = *params.as_of;
    return record.created_at <= t && (!record.superseded_at || t < *record.superseded_at);
  }
  if (params.include_superseded) return true;
  return record.state == RecordState::kActive;
}

std::vector<ScoredHit> search(const BinaryCode& query, std::span<const MemoryRecord> candidates,
                              const RetrievalParams& params, const ScoringWeights& weights,
                              TimestampMs now, unsigned threads, const CandidateFilter& extra) {
  params.validate();
  require_same_dimension(query.dimension(), weights.dimension(), "search");
  const std::size_t dim = query.dimension();
  const std::uint8_t* q = query.data();

  auto scan = [&](std::size_t begin, std::size_t end, std::vector<Survivor>& out) {
    for (std::size_t i = begin; i < end; ++i) {
      const MemoryRecord& rec = candidates[i];
      if (!admits(params, rec)) continue;
      if (extra && !extra(rec)) continue;
      require_same_dimension(rec.code.dimension(), dim, "search candidate");
      const std::uint64_t m = weights.matched(q, rec.code.data());
      if (weights.score_of(m) >= params.threshold) out.push_back({m, &rec});
    }
  };

  std::vector<Survivor> survivors;
  const std::size_t n = candidates.size();
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, n));
  if (workers == 1) {
    scan(0, n, survivors);
  } else {
    std::vector<std::vector<Survivor>> parts(workers);
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = n * w / workers;
      const std::size_t end = n * (w + 1) / workers;
      pool.emplace_back([&, w, begin, end] {
        try {
          scan(begin, end, parts[w]);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    std::size_t total = 0;
    for (const auto& p : parts) total += p.size();
    survivors.reserve(total);
    for (auto& p : parts) survivors.insert(survivors.end(), p.begin(), p.end());
  }

  if (survivors.size() > params.max_k) {
    const auto cut = survivors.begin() + static_cast<std::ptrdiff_t>(params.max_k);
    std::partial_sort(survivors.begin(), cut, survivors.end(), ranks_before);
    survivors.erase(cut, survivors.end());
  } else {
    std::sort(survivors.begin(), survivors.end(), ranks_before);
  }

  std::vector<ScoredHit> hits;
  hits.reserve(survivors.size());
  for (const auto& s : survivors) {
    hits.push_back({*s.record, weights.score_of(s.matched), now - s.record->created_at});
  }
  return hits;
}

std::vector<ScoredHit> search(const BinaryCode& query, std::span<const MemoryRecord> candidates,
                              const RetrievalParams& params, const BitStats& stats,
                              TimestampMs now, unsigned threads) {
  require_same_dimension(query.dimension(), stats.dimension(), "search stats");
  return search(query, candidates, params, ScoringWeights::from_stats(stats), now, threads);
}

}  // namespace memgrain
