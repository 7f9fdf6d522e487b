#include "memgrain/events.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "memgrain/error.hpp"
#include "memgrain/hash.hpp"

namespace memgrain {

namespace {

[[noreturn]] void corrupt(std::uint64_t seq, const std::string& why) {
  Error e(ErrorCode::kCorruptLog, "corrupt log at seq " + std::to_string(seq) + ": " + why);
  e.seq = seq;
  throw e;
}

Json payload_to_json(const EventPayload& payload) {
  return std::visit(
      [](const auto& p) -> Json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, RecordWritten>) {
          return Json{{"record", p.record}};
        } else if constexpr (std::is_same_v<T, ConflictOpened>) {
          return Json{{"conflict", p.conflict}};
        } else if constexpr (std::is_same_v<T, ConflictResolved>) {
          return Json{{"conflict_id", p.conflict_id},
                      {"action", std::string(to_string(p.action))},
                      {"actor", p.actor}};
        } else if constexpr (std::is_same_v<T, SessionOpened>) {
          return Json{{"session", p.session}};
        } else {
          return Json{{"old_id", p.old_id}, {"new_id", p.new_id}};
        }
      },
      payload);
}

EventPayload payload_from_json(std::string_view kind, const Json& j) {
  if (kind == "record_written") return RecordWritten{j.at("record").get<MemoryRecord>()};
  if (kind == "conflict_opened") return ConflictOpened{j.at("conflict").get<ConflictRecord>()};
  if (kind == "conflict_resolved") {
    return ConflictResolved{j.at("conflict_id").get<RecordId>(),
                            resolution_action_from_string(j.at("action").get<std::string>()),
                            j.at("actor").get<std::string>()};
  }
  if (kind == "session_opened") return SessionOpened{j.at("session").get<Session>()};
  if (kind == "record_superseded") {
    return RecordSuperseded{j.at("old_id").get<RecordId>(), j.at("new_id").get<RecordId>()};
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown event kind '" + std::string(kind) + "'");
}

Json unsigned_event_json(const LogEvent& e) {
  return Json{{"seq", e.seq},
              {"at", e.at},
              {"kind", std::string(to_string(e.kind()))},
              {"payload", payload_to_json(e.payload)},
              {"continued", e.continued}};
}

}  // namespace

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::kRecordWritten: return "record_written";
    case EventKind::kConflictOpened: return "conflict_opened";
    case EventKind::kConflictResolved: return "conflict_resolved";
    case EventKind::kSessionOpened: return "session_opened";
    case EventKind::kRecordSuperseded: return "record_superseded";
  }
  return "record_written";
}

EventKind LogEvent::kind() const { return static_cast<EventKind>(payload.index()); }

std::string encode_event(const LogEvent& event) {
  Json j = unsigned_event_json(event);
  j["hash"] = sha256_hex(canonical_dump(j));
  return canonical_dump(j);
}

LogEvent decode_event(std::string_view line, std::uint64_t expected_seq) {
  Json j = Json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) corrupt(expected_seq, "unparseable event");
  try {
    const std::string hash = j.at("hash").get<std::string>();
    j.erase("hash");
    if (sha256_hex(canonical_dump(j)) != hash) corrupt(expected_seq, "hash mismatch");
    LogEvent e;
    e.seq = j.at("seq").get<std::uint64_t>();
    if (e.seq != expected_seq) {
      corrupt(expected_seq, "sequence gap (found " + std::to_string(e.seq) + ")");
    }
    e.at = j.at("at").get<TimestampMs>();
    e.continued = j.at("continued").get<bool>();
    e.payload = payload_from_json(j.at("kind").get<std::string>(), j.at("payload"));
    return e;
  } catch (const Error& err) {
    if (err.code() == ErrorCode::kCorruptLog) throw;
    corrupt(expected_seq, err.what());
  } catch (const Json::exception& err) {
    corrupt(expected_seq, err.what());
  }
}

void to_json(Json& j, const StoreSnapshot& s) {
  j = Json{{"namespace", s.ns},       {"dimension", s.dimension}, {"as_of_seq", s.as_of_seq},
           {"records", s.records},    {"stats", s.stats},         {"sessions", s.sessions},
           {"conflicts", s.conflicts}, {"state_hash", s.state_hash}};
}

void from_json(const Json& j, StoreSnapshot& s) {
  s.ns = j.at("namespace").get<std::string>();
  s.dimension = j.at("dimension").get<std::size_t>();
  s.as_of_seq = j.at("as_of_seq").get<std::uint64_t>();
  s.records = j.at("records").get<std::vector<MemoryRecord>>();
  s.stats = j.at("stats").get<BitStats>();
  s.sessions = j.at("sessions").get<std::vector<Session>>();
  s.conflicts = j.at("conflicts").get<std::vector<ConflictRecord>>();
  s.state_hash = j.at("state_hash").get<std::string>();
}

std::string state_hash_of(std::span<const MemoryRecord> records) {
  std::vector<const MemoryRecord*> sorted;
  sorted.reserve(records.size());
  for (const auto& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const MemoryRecord* a, const MemoryRecord* b) { return a->id < b->id; });
  Sha256 h;
  h.update("[");
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i > 0) h.update(",");
    h.update(canonical_dump(Json(*sorted[i])));
  }
  h.update("]");
  return h.hex_digest();
}

NamespaceState::NamespaceState(std::string ns, std::size_t dimension)
    : ns_(std::move(ns)), dimension_(dimension), stats_(BitStats::empty(dimension)) {}

NamespaceState NamespaceState::from_snapshot(const StoreSnapshot& snapshot) {
  NamespaceState state(snapshot.ns, snapshot.dimension);
  state.last_seq_ = snapshot.as_of_seq;
  state.records_ = snapshot.records;
  for (std::size_t i = 0; i < state.records_.size(); ++i) {
    state.record_index_.emplace(state.records_[i].id, i);
  }
  if (snapshot.stats.dimension() != snapshot.dimension) {
    throw Error(ErrorCode::kDimensionMismatch, "snapshot stats dimension mismatch");
  }
  state.stats_ = snapshot.stats;
  state.sessions_ = snapshot.sessions;
  state.conflicts_ = snapshot.conflicts;
  for (std::size_t i = 0; i < state.conflicts_.size(); ++i) {
    state.conflict_index_.emplace(state.conflicts_[i].conflict_id, i);
    if (state.conflicts_[i].state == ConflictState::kOpen) ++state.open_conflicts_;
  }
  return state;
}

const MemoryRecord* NamespaceState::find(const RecordId& id) const {
  const auto it = record_index_.find(id);
  return it == record_index_.end() ? nullptr : &records_[it->second];
}

const Session* NamespaceState::find_session(std::string_view id) const {
  for (const auto& s : sessions_) {
    if (s.session_id == id) return &s;
  }
  return nullptr;
}

const ConflictRecord* NamespaceState::find_conflict(const RecordId& id) const {
  const auto it = conflict_index_.find(id);
  return it == conflict_index_.end() ? nullptr : &conflicts_[it->second];
}

MemoryRecord& NamespaceState::record_at(const RecordId& id, std::uint64_t seq) {
  const auto it = record_index_.find(id);
  if (it == record_index_.end()) corrupt(seq, "unknown record " + id.hex());
  return records_[it->second];
}

void NamespaceState::supersede(MemoryRecord& old_rec, const RecordId& by, TimestampMs at) {
  old_rec.state = RecordState::kSuperseded;
  old_rec.superseded_at = at;
  old_rec.superseded_by = by;
  old_rec.changes.push_back({at, ChangeKind::kSuperseded});
}

void NamespaceState::activate(MemoryRecord& rec, TimestampMs at) {
  rec.state = RecordState::kActive;
  rec.changes.push_back({at, ChangeKind::kActivated});
}

void NamespaceState::flag(MemoryRecord& rec, TimestampMs at) {
  if (rec.conflict_flag) return;
  rec.conflict_flag = true;
  rec.changes.push_back({at, ChangeKind::kFlagged});
}

void NamespaceState::apply(const LogEvent& event) {
  const std::uint64_t seq = event.seq;
  if (seq != last_seq_ + 1) corrupt(seq, "expected seq " + std::to_string(last_seq_ + 1));
  const TimestampMs at = event.at;
  auto live = [](const MemoryRecord& r) {
    return r.state == RecordState::kActive || r.state == RecordState::kProvisional;
  };

  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, SessionOpened>) {
          if (p.session.ns != ns_) corrupt(seq, "session from another namespace");
          if (find_session(p.session.session_id)) corrupt(seq, "duplicate session");
          if (p.session.end <= p.session.start) corrupt(seq, "empty session window");
          sessions_.push_back(p.session);
        } else if constexpr (std::is_same_v<T, RecordWritten>) {
          const MemoryRecord& r = p.record;
          if (r.ns != ns_) corrupt(seq, "record from another namespace");
          if (record_index_.count(r.id)) corrupt(seq, "duplicate record " + r.id.hex());
          if (r.code.dimension() != dimension_) corrupt(seq, "code dimension mismatch");
          if (!live(r) || !r.changes.empty() || !r.well_formed()) {
            corrupt(seq, "record written in a non-initial state");
          }
          if (!find_session(r.session_id)) corrupt(seq, "record references unknown session");
          accumulate(stats_, r.code);
          record_index_.emplace(r.id, records_.size());
          records_.push_back(r);
        } else if constexpr (std::is_same_v<T, ConflictOpened>) {
          const ConflictRecord& c = p.conflict;
          if (c.ns != ns_) corrupt(seq, "conflict from another namespace");
          if (conflict_index_.count(c.conflict_id)) corrupt(seq, "duplicate conflict");
          if (c.state != ConflictState::kOpen || c.resolution) corrupt(seq, "conflict opened resolved");
          if (c.candidates.empty() || c.candidates.size() > kMaxConflictCandidates) {
            corrupt(seq, "conflict candidate count out of range");
          }
          record_at(c.new_record, seq);
          for (const auto& cand : c.candidates) record_at(cand.id, seq);
          conflict_index_.emplace(c.conflict_id, conflicts_.size());
          conflicts_.push_back(c);
          ++open_conflicts_;
        } else if constexpr (std::is_same_v<T, ConflictResolved>) {
          const auto it = conflict_index_.find(p.conflict_id);
          if (it == conflict_index_.end()) corrupt(seq, "unknown conflict");
          ConflictRecord& c = conflicts_[it->second];
          if (c.state != ConflictState::kOpen) corrupt(seq, "conflict resolved twice");
          MemoryRecord& fresh = record_at(c.new_record, seq);
          Resolution res{p.action, std::nullopt, at, p.actor};
          switch (p.action) {
            case ResolutionAction::kSupersede:
              // A new record that has itself been superseded or retired in the
              // meantime replaces nothing.
              if (live(fresh)) {
                for (const auto& cand : c.candidates) {
                  MemoryRecord& old_rec = record_at(cand.id, seq);
                  if (!live(old_rec)) continue;
                  if (at < old_rec.created_at) corrupt(seq, "supersession before creation");
                  supersede(old_rec, fresh.id, at);
                }
                if (fresh.state == RecordState::kProvisional) activate(fresh, at);
              }
              res.target = fresh.id;
              break;
            case ResolutionAction::kRetain:
              if (live(fresh)) {
                fresh.state = RecordState::kRetired;
                fresh.changes.push_back({at, ChangeKind::kRetired});
              }
              res.target = c.candidates.front().id;
              break;
            case ResolutionAction::kAnnotate:
              if (fresh.state == RecordState::kProvisional) activate(fresh, at);
              flag(fresh, at);
              for (const auto& cand : c.candidates) flag(record_at(cand.id, seq), at);
              break;
          }
          c.state = ConflictState::kResolved;
          c.resolution = std::move(res);
          --open_conflicts_;
        } else {
          if (p.old_id == p.new_id) corrupt(seq, "record superseding itself");
          MemoryRecord& old_rec = record_at(p.old_id, seq);
          MemoryRecord& new_rec = record_at(p.new_id, seq);
          if (!live(old_rec) || !live(new_rec)) corrupt(seq, "illegal supersession");
          if (at < old_rec.created_at || at < new_rec.created_at) {
            corrupt(seq, "supersession before creation");
          }
          supersede(old_rec, new_rec.id, at);
          if (new_rec.state == RecordState::kProvisional) activate(new_rec, at);
        }
      },
      event.payload);
  last_seq_ = seq;
}

std::string NamespaceState::state_hash() const { return state_hash_of(records_); }

StoreSnapshot NamespaceState::snapshot() const {
  StoreSnapshot s;
  s.ns = ns_;
  s.dimension = dimension_;
  s.as_of_seq = last_seq_;
  s.records = records_;
  std::sort(s.records.begin(), s.records.end(),
            [](const MemoryRecord& a, const MemoryRecord& b) { return a.id < b.id; });
  s.stats = stats_;
  s.sessions = sessions_;
  s.conflicts = conflicts_;
  s.state_hash = state_hash_of(s.records);
  return s;
}

StoreSnapshot replay(std::string ns, std::size_t dimension, std::span<const LogEvent> events,
                     const StoreSnapshot* base) {
  NamespaceState state = base ? NamespaceState::from_snapshot(*base)
                              : NamespaceState(std::move(ns), dimension);
  for (const auto& e : events) state.apply(e);
  return state.snapshot();
}

LogReadResult read_log(const std::filesystem::path& file, std::uint64_t skip_through) {
  LogReadResult out;
  std::ifstream in(file, std::ios::binary);
  if (!in) return out;
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string data = std::move(buf).str();
  const std::string name = file.filename().string();

  std::size_t pos = 0;
  std::uint64_t seq = 0;
  std::vector<std::size_t> line_starts;  // byte offset of each kept event's line
  while (pos < data.size()) {
    const std::size_t nl = data.find('\n', pos);
    const std::uint64_t next = seq + 1;
    if (nl == std::string::npos) {
      out.diagnostics.push_back(name + ": discarded truncated event at seq " + std::to_string(next) +
                                " (" + std::to_string(data.size() - pos) + " bytes)");
      break;
    }
    if (next > skip_through) {
      out.events.push_back(decode_event(std::string_view(data).substr(pos, nl - pos), next));
      line_starts.push_back(pos);
    }
    seq = next;
    pos = nl + 1;
    out.valid_bytes = pos;
  }
  out.last_seq = seq;

  // Drop a batch that never reached its final event.
  if (!out.events.empty() && out.events.back().continued) {
    std::size_t first = out.events.size() - 1;
    while (first > 0 && out.events[first - 1].continued) --first;
    const std::uint64_t from = out.events[first].seq;
    out.diagnostics.push_back(name + ": discarded incomplete batch at seq " + std::to_string(from) +
                              ".." + std::to_string(out.events.back().seq));
    out.valid_bytes = line_starts[first];
    out.last_seq = from - 1;
    out.events.resize(first);
  }
  return out;
}

EventLog::EventLog(std::filesystem::path file, bool fsync) : path_(std::move(file)), fsync_(fsync) {
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) {
    throw Error(ErrorCode::kStorageFailure,
                "cannot open " + path_.string() + ": " + std::strerror(errno));
  }
}

EventLog::~EventLog() {
  if (fd_ >= 0) ::close(fd_);
}

void EventLog::append(std::span<const LogEvent> events) {
  std::string batch;
  for (const auto& e : events) {
    batch += encode_event(e);
    batch.push_back('\n');
  }
  struct stat st {};
  if (::fstat(fd_, &st) != 0) {
    throw Error(ErrorCode::kStorageFailure, "cannot stat " + path_.string());
  }
  const off_t before = st.st_size;
  std::size_t done = 0;
  while (done < batch.size()) {
    const ssize_t n = ::write(fd_, batch.data() + done, batch.size() - done);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      const std::string why = n < 0 ? std::strerror(errno) : "short write";
      if (::ftruncate(fd_, before) != 0) {
        // The partial tail stays on disk; recovery discards it on next open.
      }
      throw Error(ErrorCode::kStorageFailure, "append to " + path_.string() + " failed: " + why);
    }
    done += static_cast<std::size_t>(n);
  }
  if (fsync_ && ::fdatasync(fd_) != 0) {
    throw Error(ErrorCode::kStorageFailure, "fdatasync failed on " + path_.string());
  }
}

}  // namespace memgrain
