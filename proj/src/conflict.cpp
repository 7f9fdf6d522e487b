#include "memgrain/conflict.hpp"

#include "memgrain/error.hpp"

namespace memgrain {

std::string_view to_string(ResolutionAction a) {
  switch (a) {
    case ResolutionAction::kSupersede: return "supersede";
    case ResolutionAction::kRetain: return "retain";
    case ResolutionAction::kAnnotate: return "annotate";
  }
  return "supersede";
}

std::string_view to_string(ConflictState s) {
  return s == ConflictState::kOpen ? "open" : "resolved";
}

ResolutionAction resolution_action_from_string(std::string_view s) {
  for (auto a : {ResolutionAction::kSupersede, ResolutionAction::kRetain, ResolutionAction::kAnnotate}) {
    if (to_string(a) == s) return a;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "action must be supersede, retain or annotate, got '" + std::string(s) + "'");
}

ConflictState conflict_state_from_string(std::string_view s) {
  if (s == "open") return ConflictState::kOpen;
  if (s == "resolved") return ConflictState::kResolved;
  throw Error(ErrorCode::kInvalidArgument, "unknown conflict state '" + std::string(s) + "'");
}

ConflictFilter conflict_filter_from_string(std::string_view s) {
  if (s == "open") return ConflictFilter::kOpen;
  if (s == "resolved") return ConflictFilter::kResolved;
  if (s == "all" || s.empty()) return ConflictFilter::kAll;
  throw Error(ErrorCode::kInvalidArgument,
              "state filter must be open, resolved or all, got '" + std::string(s) + "'");
}

std::vector<ConflictCandidate> detect(const MemoryRecord& incoming,
                                      std::span<const MemoryRecord> view,
                                      double contradiction_threshold,
                                      const ScoringWeights& weights, unsigned threads) {
  RetrievalParams params;
  params.max_k = kMaxConflictCandidates;
  params.threshold = contradiction_threshold;
  params.types = TypeMask{incoming.type};
  const auto same_scope = [&](const MemoryRecord& r) {
    return r.ns == incoming.ns && r.id != incoming.id;
  };
  const auto hits = search(incoming.code, view, params, weights, incoming.created_at, threads, same_scope);
  std::vector<ConflictCandidate> out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back({h.record.id, h.score});
  return out;
}

}  // namespace memgrain
