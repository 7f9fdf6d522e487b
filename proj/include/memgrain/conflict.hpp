#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memgrain/its.hpp"
#include "memgrain/types.hpp"

namespace memgrain {

inline constexpr double kDefaultContradictionThreshold = 0.90;
inline constexpr std::size_t kMaxConflictCandidates = 5;

enum class ResolutionAction { kSupersede, kRetain, kAnnotate };
enum class ConflictState { kOpen, kResolved };
enum class ConflictFilter { kOpen, kResolved, kAll };

std::string_view to_string(ResolutionAction a);
std::string_view to_string(ConflictState s);
ResolutionAction resolution_action_from_string(std::string_view s);
ConflictState conflict_state_from_string(std::string_view s);
ConflictFilter conflict_filter_from_string(std::string_view s);

struct ConflictCandidate {
  RecordId id;
  double score = 0.0;
  bool operator==(const ConflictCandidate&) const = default;
};

struct Resolution {
  ResolutionAction action = ResolutionAction::kSupersede;
  // The record left authoritative: the new record for supersede, the top
  // candidate for retain, none for annotate.
  std::optional<RecordId> target;
  TimestampMs at = 0;
  std::string actor;
  bool operator==(const Resolution&) const = default;
};

struct ConflictRecord {
  RecordId conflict_id;
  std::string ns;
  RecordId new_record;
  std::vector<ConflictCandidate> candidates;  // 1..5 entries
  TimestampMs opened_at = 0;
  ConflictState state = ConflictState::kOpen;
  std::optional<Resolution> resolution;

  bool operator==(const ConflictRecord&) const = default;
};

// Scores `incoming` against every ACTIVE record of the same namespace and type
// in `view` and returns those with ITS >= threshold, best first, at most five.
// `incoming` itself is never its own candidate.
std::vector<ConflictCandidate> detect(const MemoryRecord& incoming,
                                      std::span<const MemoryRecord> view,
                                      double contradiction_threshold,
                                      const ScoringWeights& weights, unsigned threads = 1);

}  // namespace memgrain
