#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "memgrain/conflict.hpp"
#include "memgrain/embedder.hpp"
#include "memgrain/events.hpp"
#include "memgrain/its.hpp"
#include "memgrain/types.hpp"

namespace memgrain {

inline constexpr std::size_t kChunkLimit = 2000;
inline constexpr std::size_t kChunkOverlap = 200;

// Splits text longer than `limit` code points at the last whitespace inside
// the window (past the overlap), falling back to a hard cut; consecutive
// chunks share `overlap` code points.
std::vector<std::string> chunk_content(std::string_view text, std::size_t limit = kChunkLimit,
                                       std::size_t overlap = kChunkOverlap);

struct StoreOptions {
  // Data directory; unset keeps everything in memory.
  std::optional<std::filesystem::path> root;
  std::size_t dimension = 256;
  double contradiction_threshold = kDefaultContradictionThreshold;
  bool detect_conflicts = true;
  TimestampMs session_duration_ms = kDefaultSessionDurationMs;
  bool fsync = false;
  unsigned search_threads = 1;
  Clock clock;             // defaults to the system clock
  EntropySource entropy;   // defaults to random_device seeding
  std::shared_ptr<const Embedder> embedder;  // defaults to HashEmbedder(dimension)
};

struct RememberRequest {
  std::string ns;
  std::string content;
  std::optional<MemoryType> type;  // "fact" when absent
  std::set<std::string> tags;
  std::optional<std::string> session_id;
  std::optional<TimestampMs> at;
  Provenance provenance = Provenance::kStated;
};

struct WriteOutcome {
  std::vector<MemoryRecord> records;  // one per chunk
  std::vector<ConflictRecord> opened_conflicts;
};

struct ResolutionOutcome {
  ConflictRecord conflict;
  std::vector<MemoryRecord> records;  // new record followed by candidates
};

struct StoreCounters {
  std::size_t namespaces = 0;
  std::size_t records = 0;
  std::size_t open_conflicts = 0;
};

// Namespace-isolated bitemporal memory store backed by one event log per
// namespace. Writes are serialized; reads share a lock and run in parallel.
class MemoryStore {
 public:
  explicit MemoryStore(StoreOptions options = {});
  ~MemoryStore();
  MemoryStore(const MemoryStore&) = delete;
  MemoryStore& operator=(const MemoryStore&) = delete;

  WriteOutcome remember(const RememberRequest& request);

  // Exactly one retrieval query per call. Unknown namespace -> no hits.
  std::vector<ScoredHit> recall(std::string_view ns, std::string_view query,
                                const RetrievalParams& params) const;
  std::vector<ScoredHit> recall_code(std::string_view ns, const BinaryCode& query,
                                     const RetrievalParams& params) const;

  std::vector<MemoryRecord> as_of(std::string_view ns, TimestampMs t) const;
  // Throws Error(kInvalidRange) when until < since.
  std::vector<MemoryRecord> changed_since(std::string_view ns, TimestampMs since,
                                          std::optional<TimestampMs> until = std::nullopt) const;

  std::vector<MemoryRecord> apply_supersession(const RecordId& old_id, const RecordId& new_id,
                                               std::optional<TimestampMs> at = std::nullopt);

  ResolutionOutcome resolve_conflict(const RecordId& conflict_id, ResolutionAction action,
                                     std::string_view actor,
                                     std::optional<TimestampMs> at = std::nullopt);
  std::vector<ConflictRecord> list_conflicts(std::string_view ns, ConflictFilter filter) const;
  std::optional<ConflictRecord> get_conflict(const RecordId& id) const;

  std::optional<MemoryRecord> get(const RecordId& id) const;
  std::vector<Session> sessions(std::string_view ns) const;
  std::vector<std::string> namespaces() const;
  bool has_namespace(std::string_view ns) const;

  StoreSnapshot snapshot(std::string_view ns) const;
  // Writes {root}/{ns}/snapshot-{seq}.json; requires a data directory.
  std::filesystem::path write_snapshot(std::string_view ns);

  double contradiction_threshold(std::string_view ns) const;
  // Persisted to {root}/{ns}/config.json when a data directory is set.
  void set_contradiction_threshold(std::string_view ns, double threshold);

  StoreCounters counters() const;
  std::uint64_t retrieval_queries() const { return retrieval_queries_.load(); }
  std::vector<std::string> recovery_diagnostics() const;

  TimestampMs now() const { return options_.clock(); }
  const StoreOptions& options() const { return options_; }
  const Embedder& embedder() const { return *options_.embedder; }

  // Runs `fn(const NamespaceState*)` under the read lock; null when the
  // namespace does not exist.
  template <class Fn>
  decltype(auto) read(std::string_view ns, Fn&& fn) const {
    std::shared_lock lock(mutex_);
    return fn(find_state(ns));
  }

 private:
  struct Namespace;

  const NamespaceState* find_state(std::string_view ns) const;
  Namespace& open_namespace(const std::string& ns);
  void load_namespace(const std::filesystem::path& dir, const std::string& ns);
  void commit(Namespace& space, std::vector<LogEvent>& events);
  std::pair<Namespace*, const MemoryRecord*> locate(const RecordId& id) const;
  RecordId fresh_id(TimestampMs at) const;

  StoreOptions options_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::unique_ptr<Namespace>, std::less<>> spaces_;
  // Record and conflict ids to their namespace.
  std::unordered_map<RecordId, Namespace*, RecordIdHash> owner_;
  std::vector<std::string> diagnostics_;
  mutable std::atomic<std::uint64_t> retrieval_queries_{0};
};

}  // namespace memgrain
