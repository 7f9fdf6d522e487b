#pragma once

// Binary retrieval core: sign binarization, per-namespace bit statistics,
// entropy weights, the information-theoretic score (ITS) and threshold-gated
// exhaustive search.
//
// ITS(q, d) = sum of w_i over bits where q_i == d_i, divided by sum of w_i,
// with w_i the binary entropy of the Laplace-smoothed bit frequency. Weights
// are quantized to fixed point before summation so a score never depends on
// the order bits or candidates are visited in.

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "memgrain/embedder.hpp"
#include "memgrain/its_code.hpp"
#include "memgrain/types.hpp"

namespace memgrain {

inline constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();

// Bit i is 1 iff e[i] > 0 (exact zero maps to 0).
BinaryCode binarize(const Embedding& e);
// Throws Error(kDimensionMismatch) when e.dimension() != dimension.
BinaryCode binarize(const Embedding& e, std::size_t dimension);

struct BitStats {
  std::vector<std::uint64_t> counts;  // records with bit i set
  std::uint64_t n = 0;                // records counted

  static BitStats empty(std::size_t dimension) { return {std::vector<std::uint64_t>(dimension, 0), 0}; }
  std::size_t dimension() const { return counts.size(); }
  bool operator==(const BitStats&) const = default;
};

// In place; throws Error(kDimensionMismatch).
void accumulate(BitStats& stats, const BinaryCode& code);
BitStats update_stats(BitStats stats, const BinaryCode& code);

// p_i = (counts_i + 1) / (n + 2);  w_i = H2(p_i), each in (0, 1].
std::vector<double> bit_weights(const BitStats& stats);

// Fixed-point weights plus a per-byte lookup table. For byte j and an 8-bit
// agreement mask m, table(j, m) is the summed weight of the agreeing bits.
class ScoringWeights {
 public:
  static constexpr double kScale = 68719476736.0;  // 2^36
  static constexpr std::size_t kMaxDimension = 65536;

  explicit ScoringWeights(std::span<const double> weights);
  static ScoringWeights from_stats(const BitStats& stats) { return ScoringWeights(bit_weights(stats)); }

  std::size_t dimension() const { return quantized_.size(); }
  std::uint64_t total() const { return total_; }
  std::span<const std::uint64_t> quantized() const { return quantized_; }

  // Summed weight of agreeing bits. Lengths must already match.
  std::uint64_t matched(const std::uint8_t* q, const std::uint8_t* d) const {
    std::uint64_t sum = 0;
    const std::size_t bytes = quantized_.size() / 8;
    const std::uint64_t* row = table_.data();
    for (std::size_t j = 0; j < bytes; ++j, row += 256) {
      sum += row[static_cast<std::uint8_t>(~(q[j] ^ d[j]))];
    }
    return sum;
  }

  double score_of(std::uint64_t matched_weight) const {
    return static_cast<double>(matched_weight) / static_cast<double>(total_);
  }

 private:
  std::vector<std::uint64_t> quantized_;
  std::vector<std::uint64_t> table_;
  std::uint64_t total_ = 0;
};

// Throws Error(kDimensionMismatch) when lengths differ.
double its_score(const BinaryCode& q, const BinaryCode& d, const ScoringWeights& w);
double its_score(const BinaryCode& q, const BinaryCode& d, std::span<const double> w);

struct RetrievalParams {
  std::size_t max_k = 100;
  double threshold = 0.05;
  std::optional<TypeMask> types;
  std::optional<TimestampMs> as_of;
  bool include_superseded = false;

  // Throws Error(kInvalidArgument).
  void validate() const;
};

struct ScoredHit {
  MemoryRecord record;
  double score = 0.0;
  std::int64_t age_ms = 0;
  bool operator==(const ScoredHit&) const = default;
};

// Type and temporal admission used by search (before scoring).
bool admits(const RetrievalParams& params, const MemoryRecord& record);

// Extra caller predicate applied after the type and temporal filters.
using CandidateFilter = std::function<bool(const MemoryRecord&)>;

// Exhaustive threshold-gated search. Every admitted candidate is scored;
// survivors with score >= threshold are ordered by (score desc, created_at
// desc, id asc) and truncated to max_k. Candidates must already be
// namespace-scoped. The result does not depend on `threads` or candidate order.
std::vector<ScoredHit> search(const BinaryCode& query, std::span<const MemoryRecord> candidates,
                              const RetrievalParams& params, const ScoringWeights& weights,
                              TimestampMs now, unsigned threads = 1,
                              const CandidateFilter& extra = {});

std::vector<ScoredHit> search(const BinaryCode& query, std::span<const MemoryRecord> candidates,
                              const RetrievalParams& params, const BitStats& stats,
                              TimestampMs now, unsigned threads = 1);

}  // namespace memgrain
