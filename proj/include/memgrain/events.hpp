#pragma once

// Append-only event log and the pure fold that turns it into namespace state.
//
// A log line is the canonical JSON of
//   {"at", "continued", "hash", "kind", "payload", "seq"}
// terminated by '\n', where "hash" is the SHA-256 of the same object without
// the "hash" key. "continued" marks an event whose atomic batch goes on in the
// next line; a batch cut short at the end of the file is discarded on recovery.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "memgrain/codec.hpp"
#include "memgrain/conflict.hpp"
#include "memgrain/its.hpp"
#include "memgrain/types.hpp"

namespace memgrain {

enum class EventKind {
  kRecordWritten,
  kConflictOpened,
  kConflictResolved,
  kSessionOpened,
  kRecordSuperseded,
};

std::string_view to_string(EventKind k);

struct RecordWritten {
  MemoryRecord record;
  bool operator==(const RecordWritten&) const = default;
};
struct ConflictOpened {
  ConflictRecord conflict;
  bool operator==(const ConflictOpened&) const = default;
};
struct ConflictResolved {
  RecordId conflict_id;
  ResolutionAction action = ResolutionAction::kSupersede;
  std::string actor;
  bool operator==(const ConflictResolved&) const = default;
};
struct SessionOpened {
  Session session;
  bool operator==(const SessionOpened&) const = default;
};
struct RecordSuperseded {
  RecordId old_id;
  RecordId new_id;
  bool operator==(const RecordSuperseded&) const = default;
};

using EventPayload =
    std::variant<RecordWritten, ConflictOpened, ConflictResolved, SessionOpened, RecordSuperseded>;

struct LogEvent {
  std::uint64_t seq = 0;
  TimestampMs at = 0;
  EventPayload payload;
  bool continued = false;

  EventKind kind() const;
  bool operator==(const LogEvent&) const = default;
};

// One log line without the trailing newline.
std::string encode_event(const LogEvent& event);
// Throws Error(kCorruptLog) with `seq` set to `expected_seq` on any defect.
LogEvent decode_event(std::string_view line, std::uint64_t expected_seq);

struct StoreSnapshot {
  std::string ns;
  std::size_t dimension = 0;
  std::uint64_t as_of_seq = 0;
  std::vector<MemoryRecord> records;  // sorted by id
  BitStats stats;
  std::vector<Session> sessions;
  std::vector<ConflictRecord> conflicts;
  std::string state_hash;
};

void to_json(Json& j, const StoreSnapshot& s);
void from_json(const Json& j, StoreSnapshot& s);

// SHA-256 of the canonical JSON array of `records` sorted by id.
std::string state_hash_of(std::span<const MemoryRecord> records);

// Namespace state as a left fold over log events.
class NamespaceState {
 public:
  NamespaceState(std::string ns, std::size_t dimension);
  static NamespaceState from_snapshot(const StoreSnapshot& snapshot);

  // Applies the next event. Throws Error(kCorruptLog) when the event does not
  // follow from the current state (wrong seq, unknown ids, illegal transition).
  void apply(const LogEvent& event);

  const std::string& ns() const { return ns_; }
  std::size_t dimension() const { return dimension_; }
  std::uint64_t last_seq() const { return last_seq_; }

  std::span<const MemoryRecord> records() const { return records_; }
  const MemoryRecord* find(const RecordId& id) const;
  const BitStats& stats() const { return stats_; }
  std::span<const Session> sessions() const { return sessions_; }
  const Session* find_session(std::string_view id) const;
  std::span<const ConflictRecord> conflicts() const { return conflicts_; }
  const ConflictRecord* find_conflict(const RecordId& id) const;
  std::size_t open_conflicts() const { return open_conflicts_; }

  std::string state_hash() const;
  StoreSnapshot snapshot() const;

 private:
  MemoryRecord& record_at(const RecordId& id, std::uint64_t seq);
  void supersede(MemoryRecord& old_rec, const RecordId& by, TimestampMs at);
  static void activate(MemoryRecord& rec, TimestampMs at);
  static void flag(MemoryRecord& rec, TimestampMs at);

  std::string ns_;
  std::size_t dimension_;
  std::uint64_t last_seq_ = 0;
  std::vector<MemoryRecord> records_;
  std::unordered_map<RecordId, std::size_t, RecordIdHash> record_index_;
  BitStats stats_;
  std::vector<Session> sessions_;
  std::vector<ConflictRecord> conflicts_;
  std::unordered_map<RecordId, std::size_t, RecordIdHash> conflict_index_;
  std::size_t open_conflicts_ = 0;
};

// Pure replay: folds `events` onto `base` (or the empty state).
StoreSnapshot replay(std::string ns, std::size_t dimension, std::span<const LogEvent> events,
                     const StoreSnapshot* base = nullptr);

struct LogReadResult {
  std::vector<LogEvent> events;      // seq > skip_through, in order
  std::uint64_t last_seq = 0;        // last intact seq in the file
  std::uintmax_t valid_bytes = 0;    // length of the intact prefix
  std::vector<std::string> diagnostics;
};

// Reads a log file, skipping parse of lines with seq <= skip_through. A final
// line without '\n' and an unfinished batch at the tail are dropped and
// reported; any other defect throws Error(kCorruptLog).
LogReadResult read_log(const std::filesystem::path& file, std::uint64_t skip_through = 0);

// Append handle. Each append() is a single write(2) of whole lines; on failure
// the file is cut back to its previous length and Error(kStorageFailure) is
// thrown.
class EventLog {
 public:
  EventLog(std::filesystem::path file, bool fsync);
  ~EventLog();
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  void append(std::span<const LogEvent> events);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  bool fsync_;
};

}  // namespace memgrain
