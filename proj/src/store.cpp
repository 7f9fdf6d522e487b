#include "memgrain/store.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "memgrain/codec.hpp"
#include "memgrain/error.hpp"

namespace fs = std::filesystem;

namespace memgrain {

namespace {

constexpr const char* kLogFile = "events.log";
constexpr const char* kConfigFile = "config.json";

bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

void require_threshold(double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "contradiction threshold must lie in [0, 1]");
  }
}

void write_file_atomically(const fs::path& target, const std::string& bytes) {
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << bytes;
    out.flush();
    if (!out) throw Error(ErrorCode::kStorageFailure, "cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw Error(ErrorCode::kStorageFailure, "cannot rename into " + target.string());
}

std::optional<std::uint64_t> snapshot_seq(const fs::path& file) {
  const std::string name = file.filename().string();
  constexpr std::string_view prefix = "snapshot-";
  constexpr std::string_view suffix = ".json";
  if (name.size() <= prefix.size() + suffix.size() || !name.starts_with(prefix) ||
      !name.ends_with(suffix)) {
    return std::nullopt;
  }
  const std::string_view digits =
      std::string_view(name).substr(prefix.size(), name.size() - prefix.size() - suffix.size());
  std::uint64_t seq = 0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), seq);
  if (ec != std::errc{} || ptr != digits.data() + digits.size()) return std::nullopt;
  return seq;
}

}  // namespace

std::vector<std::string> chunk_content(std::string_view text, std::size_t limit, std::size_t overlap) {
  if (limit <= overlap) throw Error(ErrorCode::kInvalidArgument, "chunk limit must exceed overlap");
  std::vector<std::size_t> starts;  // byte offset of every code point, plus end
  starts.reserve(text.size() + 1);
  for (std::size_t i = 0; i < text.size(); ++i) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) starts.push_back(i);
  }
  const std::size_t n = starts.size();
  starts.push_back(text.size());
  if (n <= limit) return {std::string(text)};

  auto slice = [&](std::size_t a, std::size_t b) {
    return std::string(text.substr(starts[a], starts[b] - starts[a]));
  };
  std::vector<std::string> chunks;
  std::size_t start = 0;
  while (n - start > limit) {
    const std::size_t end = start + limit;
    std::size_t cut = end;
    for (std::size_t i = end - 1; i > start + overlap; --i) {
      if (is_ascii_space(text[starts[i]])) {
        cut = i;
        break;
      }
    }
    chunks.push_back(slice(start, cut));
    start = cut - overlap;
  }
  chunks.push_back(slice(start, n));
  return chunks;
}

struct MemoryStore::Namespace {
  Namespace(NamespaceState s, double t) : state(std::move(s)), threshold(t) {}
  NamespaceState state;
  double threshold;
  std::unique_ptr<EventLog> log;
};

MemoryStore::MemoryStore(StoreOptions options) : options_(std::move(options)) {
  require_dimension(options_.dimension);
  require_threshold(options_.contradiction_threshold);
  if (options_.session_duration_ms <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "session duration must be positive");
  }
  if (!options_.clock) options_.clock = system_now_ms;
  if (!options_.entropy) options_.entropy = random_entropy();
  if (!options_.embedder) options_.embedder = std::make_shared<HashEmbedder>(options_.dimension);
  if (options_.embedder->dimension() != options_.dimension) {
    throw Error(ErrorCode::kDimensionMismatch, "embedder dimension differs from store dimension");
  }
  if (options_.search_threads == 0) options_.search_threads = 1;

  if (options_.root) {
    std::error_code ec;
    fs::create_directories(*options_.root, ec);
    if (ec) throw Error(ErrorCode::kStorageFailure, "cannot create " + options_.root->string());
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(*options_.root)) {
      if (entry.is_directory() && is_valid_namespace(entry.path().filename().string())) {
        dirs.push_back(entry.path());
      }
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) load_namespace(dir, dir.filename().string());
  }
}

MemoryStore::~MemoryStore() = default;

void MemoryStore::load_namespace(const fs::path& dir, const std::string& ns) {
  double threshold = options_.contradiction_threshold;
  if (std::ifstream cfg(dir / kConfigFile); cfg) {
    const Json j = Json::parse(cfg, nullptr, false);
    if (!j.is_discarded() && j.contains("contradiction_threshold") &&
        j["contradiction_threshold"].is_number()) {
      threshold = j["contradiction_threshold"].get<double>();
      require_threshold(threshold);
    }
  }

  std::vector<std::pair<std::uint64_t, fs::path>> snapshots;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (auto seq = snapshot_seq(entry.path())) snapshots.emplace_back(*seq, entry.path());
  }
  std::sort(snapshots.rbegin(), snapshots.rend());

  std::optional<StoreSnapshot> base;
  for (const auto& [seq, path] : snapshots) {
    try {
      std::ifstream in(path, std::ios::binary);
      StoreSnapshot snap = Json::parse(in).get<StoreSnapshot>();
      if (snap.ns != ns || snap.as_of_seq != seq || snap.dimension != options_.dimension ||
          state_hash_of(snap.records) != snap.state_hash) {
        diagnostics_.push_back(ns + "/" + path.filename().string() + ": ignored (failed verification)");
        continue;
      }
      base = std::move(snap);
      break;
    } catch (const std::exception&) {
      diagnostics_.push_back(ns + "/" + path.filename().string() + ": ignored (unreadable)");
    }
  }

  const fs::path log_path = dir / kLogFile;
  LogReadResult log = read_log(log_path, base ? base->as_of_seq : 0);
  if (base && log.last_seq < base->as_of_seq) {
    diagnostics_.push_back(ns + "/snapshot-" + std::to_string(base->as_of_seq) +
                           ".json: ignored (ahead of the event log)");
    base.reset();
    log = read_log(log_path, 0);
  }
  for (const auto& d : log.diagnostics) diagnostics_.push_back(ns + "/" + d);

  NamespaceState state = base ? NamespaceState::from_snapshot(*base) : NamespaceState(ns, options_.dimension);
  for (const auto& e : log.events) {
    try {
      state.apply(e);
    } catch (const Error& err) {
      if (err.code() == ErrorCode::kCorruptLog) throw;
      Error wrapped(ErrorCode::kCorruptLog, std::string(err.what()));
      wrapped.seq = e.seq;
      throw wrapped;
    }
  }

  std::error_code ec;
  if (fs::exists(log_path) && fs::file_size(log_path) > log.valid_bytes) {
    fs::resize_file(log_path, log.valid_bytes, ec);
    if (ec) throw Error(ErrorCode::kStorageFailure, "cannot trim " + log_path.string());
  }

  auto space = std::make_unique<Namespace>(std::move(state), threshold);
  space->log = std::make_unique<EventLog>(log_path, options_.fsync);
  for (const auto& r : space->state.records()) owner_[r.id] = space.get();
  for (const auto& c : space->state.conflicts()) owner_[c.conflict_id] = space.get();
  spaces_.emplace(ns, std::move(space));
}

MemoryStore::Namespace& MemoryStore::open_namespace(const std::string& ns) {
  if (auto it = spaces_.find(ns); it != spaces_.end()) return *it->second;
  auto space = std::make_unique<Namespace>(NamespaceState(ns, options_.dimension),
                                           options_.contradiction_threshold);
  if (options_.root) {
    const fs::path dir = *options_.root / ns;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::kStorageFailure, "cannot create " + dir.string());
    space->log = std::make_unique<EventLog>(dir / kLogFile, options_.fsync);
  }
  return *spaces_.emplace(ns, std::move(space)).first->second;
}

const NamespaceState* MemoryStore::find_state(std::string_view ns) const {
  const auto it = spaces_.find(ns);
  return it == spaces_.end() ? nullptr : &it->second->state;
}

void MemoryStore::commit(Namespace& space, std::vector<LogEvent>& events) {
  std::uint64_t seq = space.state.last_seq();
  for (std::size_t i = 0; i < events.size(); ++i) {
    events[i].seq = ++seq;
    events[i].continued = i + 1 < events.size();
  }
  if (space.log) space.log->append(events);
  for (const auto& e : events) {
    space.state.apply(e);
    if (const auto* w = std::get_if<RecordWritten>(&e.payload)) owner_[w->record.id] = &space;
    if (const auto* c = std::get_if<ConflictOpened>(&e.payload)) owner_[c->conflict.conflict_id] = &space;
  }
}

RecordId MemoryStore::fresh_id(TimestampMs at) const {
  for (;;) {
    const RecordId id = RecordId::make(at, options_.entropy());
    if (!owner_.count(id)) return id;
  }
}

std::pair<MemoryStore::Namespace*, const MemoryRecord*> MemoryStore::locate(const RecordId& id) const {
  const auto it = owner_.find(id);
  if (it == owner_.end()) return {nullptr, nullptr};
  return {it->second, it->second->state.find(id)};
}

WriteOutcome MemoryStore::remember(const RememberRequest& request) {
  require_valid_namespace(request.ns);
  if (request.content.empty()) throw Error(ErrorCode::kEmptyContent, "content is empty");
  if (!is_valid_utf8(request.content)) throw Error(ErrorCode::kInvalidArgument, "content is not valid UTF-8");
  for (const auto& tag : request.tags) {
    if (tag.empty() || !is_valid_utf8(tag)) throw Error(ErrorCode::kInvalidArgument, "tags must be non-empty UTF-8");
  }
  if (request.session_id &&
      (request.session_id->empty() || request.session_id->size() > 128 || !is_valid_utf8(*request.session_id))) {
    throw Error(ErrorCode::kInvalidArgument, "session_id must be 1..128 bytes of UTF-8");
  }
  const MemoryType type = request.type.value_or(MemoryType::kFact);

  std::vector<std::string> chunks = chunk_content(request.content);
  std::vector<std::string> kept;
  std::vector<BinaryCode> codes;
  for (auto& chunk : chunks) {
    try {
      codes.push_back(binarize(options_.embedder->embed(chunk), options_.dimension));
      kept.push_back(std::move(chunk));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kEmptyContent || chunks.size() == 1) throw;
    }
  }
  if (kept.empty()) throw Error(ErrorCode::kEmptyContent, "content has no alphanumeric tokens");

  std::unique_lock lock(mutex_);
  const TimestampMs at = request.at.value_or(options_.clock());
  if (at < 0 || at >= (TimestampMs{1} << 48)) {
    throw Error(ErrorCode::kClockOutOfRange, "timestamp " + std::to_string(at) + " out of range");
  }
  Namespace& space = open_namespace(request.ns);
  const NamespaceState& state = space.state;
  std::vector<LogEvent> events;

  std::string session_id;
  if (request.session_id) {
    session_id = *request.session_id;
    if (!state.find_session(session_id)) {
      events.push_back({0, at, SessionOpened{{session_id, request.ns, at, at + options_.session_duration_ms}}});
    }
  } else {
    const Session* chosen = nullptr;
    for (const auto& s : state.sessions()) {
      if (!s.covers(at)) continue;
      if (!chosen || s.start > chosen->start ||
          (s.start == chosen->start && s.session_id < chosen->session_id)) {
        chosen = &s;
      }
    }
    if (chosen) {
      session_id = chosen->session_id;
    } else {
      session_id = fresh_id(at).hex();
      events.push_back({0, at, SessionOpened{{session_id, request.ns, at, at + options_.session_duration_ms}}});
    }
  }

  WriteOutcome outcome;
  std::set<RecordId> batch_ids;
  auto unique_id = [&] {
    for (;;) {
      const RecordId id = fresh_id(at);
      if (batch_ids.insert(id).second) return id;
    }
  };
  for (std::size_t i = 0; i < kept.size(); ++i) {
    MemoryRecord r;
    r.id = unique_id();
    r.ns = request.ns;
    r.session_id = session_id;
    r.type = type;
    r.content = std::move(kept[i]);
    r.tags = request.tags;
    r.code = std::move(codes[i]);
    r.created_at = at;
    r.state = RecordState::kActive;
    r.provenance = request.provenance;
    outcome.records.push_back(std::move(r));
  }

  if (options_.detect_conflicts) {
    BitStats stats = state.stats();
    for (const auto& r : outcome.records) accumulate(stats, r.code);
    const ScoringWeights weights = ScoringWeights::from_stats(stats);
    for (auto& r : outcome.records) {
      auto candidates = detect(r, state.records(), space.threshold, weights, options_.search_threads);
      if (candidates.empty()) continue;
      r.state = RecordState::kProvisional;
      outcome.opened_conflicts.push_back(
          {unique_id(), request.ns, r.id, std::move(candidates), at, ConflictState::kOpen, std::nullopt});
    }
  }

  for (const auto& r : outcome.records) events.push_back({0, at, RecordWritten{r}});
  for (const auto& c : outcome.opened_conflicts) events.push_back({0, at, ConflictOpened{c}});
  commit(space, events);
  return outcome;
}

std::vector<ScoredHit> MemoryStore::recall(std::string_view ns, std::string_view query,
                                           const RetrievalParams& params) const {
  params.validate();
  const BinaryCode code = binarize(options_.embedder->embed(query), options_.dimension);
  return recall_code(ns, code, params);
}

std::vector<ScoredHit> MemoryStore::recall_code(std::string_view ns, const BinaryCode& query,
                                                const RetrievalParams& params) const {
  params.validate();
  if (query.dimension() != options_.dimension) {
    throw Error(ErrorCode::kDimensionMismatch, "query code dimension differs from store dimension");
  }
  std::shared_lock lock(mutex_);
  retrieval_queries_.fetch_add(1);
  const NamespaceState* state = find_state(ns);
  if (!state) return {};
  return search(query, state->records(), params, ScoringWeights::from_stats(state->stats()),
                options_.clock(), options_.search_threads);
}

std::vector<MemoryRecord> MemoryStore::as_of(std::string_view ns, TimestampMs t) const {
  std::shared_lock lock(mutex_);
  std::vector<MemoryRecord> out;
  const NamespaceState* state = find_state(ns);
  if (!state) return out;
  for (const auto& r : state->records()) {
    if (r.created_at > t) continue;
    if (r.superseded_at && *r.superseded_at <= t) continue;
    if (const auto retired = r.retired_at(); retired && *retired <= t) continue;
    out.push_back(r);
  }
  std::sort(out.begin(), out.end(), [](const MemoryRecord& a, const MemoryRecord& b) { return a.id < b.id; });
  return out;
}

std::vector<MemoryRecord> MemoryStore::changed_since(std::string_view ns, TimestampMs since,
                                                     std::optional<TimestampMs> until) const {
  if (until && *until < since) {
    throw Error(ErrorCode::kInvalidRange, "until precedes changed_since");
  }
  std::shared_lock lock(mutex_);
  std::vector<std::pair<TimestampMs, const MemoryRecord*>> hits;
  if (const NamespaceState* state = find_state(ns)) {
    for (const auto& r : state->records()) {
      std::optional<TimestampMs> last;
      for (TimestampMs t : r.change_times()) {
        if (t >= since && (!until || t < *until)) last = std::max(last.value_or(t), t);
      }
      if (last) hits.emplace_back(*last, &r);
    }
  }
  std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second->id < b.second->id;
  });
  std::vector<MemoryRecord> out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back(*h.second);
  return out;
}

std::vector<MemoryRecord> MemoryStore::apply_supersession(const RecordId& old_id, const RecordId& new_id,
                                                          std::optional<TimestampMs> at) {
  std::unique_lock lock(mutex_);
  const auto [old_space, old_rec] = locate(old_id);
  const auto [new_space, new_rec] = locate(new_id);
  if (!old_rec) throw Error(ErrorCode::kNotFound, "record " + old_id.hex() + " not found");
  if (!new_rec) throw Error(ErrorCode::kNotFound, "record " + new_id.hex() + " not found");
  if (old_space != new_space) {
    throw Error(ErrorCode::kIllegalTransition, "records live in different namespaces");
  }
  if (old_id == new_id) throw Error(ErrorCode::kIllegalTransition, "a record cannot supersede itself");
  auto live = [](const MemoryRecord* r) {
    return r->state == RecordState::kActive || r->state == RecordState::kProvisional;
  };
  if (!live(old_rec)) {
    throw Error(ErrorCode::kIllegalTransition,
                "cannot supersede a " + std::string(to_string(old_rec->state)) + " record");
  }
  if (!live(new_rec)) {
    throw Error(ErrorCode::kIllegalTransition,
                "a " + std::string(to_string(new_rec->state)) + " record cannot supersede another");
  }
  const TimestampMs floor = std::max(old_rec->created_at, new_rec->created_at);
  TimestampMs when;
  if (at) {
    if (*at < floor) throw Error(ErrorCode::kInvalidRange, "supersession precedes record creation");
    when = *at;
  } else {
    when = std::max(options_.clock(), floor);
  }
  std::vector<LogEvent> events{{0, when, RecordSuperseded{old_id, new_id}}};
  commit(*old_space, events);
  return {*old_space->state.find(old_id), *old_space->state.find(new_id)};
}

ResolutionOutcome MemoryStore::resolve_conflict(const RecordId& conflict_id, ResolutionAction action,
                                                std::string_view actor, std::optional<TimestampMs> at) {
  std::unique_lock lock(mutex_);
  const auto it = owner_.find(conflict_id);
  const ConflictRecord* conflict = it == owner_.end() ? nullptr : it->second->state.find_conflict(conflict_id);
  if (!conflict) throw Error(ErrorCode::kNotFound, "conflict " + conflict_id.hex() + " not found");
  if (conflict->state == ConflictState::kResolved) {
    throw Error(ErrorCode::kAlreadyResolved, "conflict " + conflict_id.hex() + " is already resolved");
  }
  Namespace& space = *it->second;
  TimestampMs floor = space.state.find(conflict->new_record)->created_at;
  for (const auto& c : conflict->candidates) floor = std::max(floor, space.state.find(c.id)->created_at);
  TimestampMs when;
  if (at) {
    if (*at < floor) throw Error(ErrorCode::kInvalidRange, "resolution precedes record creation");
    when = *at;
  } else {
    when = std::max(options_.clock(), floor);
  }
  std::vector<LogEvent> events{{0, when, ConflictResolved{conflict_id, action, std::string(actor)}}};
  commit(space, events);

  ResolutionOutcome out;
  out.conflict = *space.state.find_conflict(conflict_id);
  out.records.push_back(*space.state.find(out.conflict.new_record));
  for (const auto& c : out.conflict.candidates) out.records.push_back(*space.state.find(c.id));
  return out;
}

std::vector<ConflictRecord> MemoryStore::list_conflicts(std::string_view ns, ConflictFilter filter) const {
  std::shared_lock lock(mutex_);
  std::vector<ConflictRecord> out;
  if (const NamespaceState* state = find_state(ns)) {
    for (const auto& c : state->conflicts()) {
      if (filter == ConflictFilter::kOpen && c.state != ConflictState::kOpen) continue;
      if (filter == ConflictFilter::kResolved && c.state != ConflictState::kResolved) continue;
      out.push_back(c);
    }
  }
  std::sort(out.begin(), out.end(), [](const ConflictRecord& a, const ConflictRecord& b) {
    if (a.opened_at != b.opened_at) return a.opened_at > b.opened_at;
    return a.conflict_id < b.conflict_id;
  });
  return out;
}

std::optional<ConflictRecord> MemoryStore::get_conflict(const RecordId& id) const {
  std::shared_lock lock(mutex_);
  const auto it = owner_.find(id);
  if (it == owner_.end()) return std::nullopt;
  if (const auto* c = it->second->state.find_conflict(id)) return *c;
  return std::nullopt;
}

std::optional<MemoryRecord> MemoryStore::get(const RecordId& id) const {
  std::shared_lock lock(mutex_);
  if (const auto [space, rec] = locate(id); rec) return *rec;
  return std::nullopt;
}

std::vector<Session> MemoryStore::sessions(std::string_view ns) const {
  std::shared_lock lock(mutex_);
  std::vector<Session> out;
  if (const NamespaceState* state = find_state(ns)) {
    out.assign(state->sessions().begin(), state->sessions().end());
  }
  std::sort(out.begin(), out.end(), [](const Session& a, const Session& b) {
    if (a.start != b.start) return a.start < b.start;
    return a.session_id < b.session_id;
  });
  return out;
}

std::vector<std::string> MemoryStore::namespaces() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [name, space] : spaces_) out.push_back(name);
  return out;
}

bool MemoryStore::has_namespace(std::string_view ns) const {
  std::shared_lock lock(mutex_);
  return find_state(ns) != nullptr;
}

StoreSnapshot MemoryStore::snapshot(std::string_view ns) const {
  std::shared_lock lock(mutex_);
  if (const NamespaceState* state = find_state(ns)) return state->snapshot();
  return NamespaceState(std::string(ns), options_.dimension).snapshot();
}

fs::path MemoryStore::write_snapshot(std::string_view ns) {
  if (!options_.root) throw Error(ErrorCode::kInvalidArgument, "snapshots need a data directory");
  std::shared_lock lock(mutex_);
  const NamespaceState* state = find_state(ns);
  if (!state) throw Error(ErrorCode::kNotFound, "namespace '" + std::string(ns) + "' not found");
  const StoreSnapshot snap = state->snapshot();
  const fs::path target =
      *options_.root / std::string(ns) / ("snapshot-" + std::to_string(snap.as_of_seq) + ".json");
  write_file_atomically(target, canonical_dump(Json(snap)));
  return target;
}

double MemoryStore::contradiction_threshold(std::string_view ns) const {
  std::shared_lock lock(mutex_);
  const auto it = spaces_.find(ns);
  return it == spaces_.end() ? options_.contradiction_threshold : it->second->threshold;
}

void MemoryStore::set_contradiction_threshold(std::string_view ns, double threshold) {
  require_valid_namespace(ns);
  require_threshold(threshold);
  std::unique_lock lock(mutex_);
  Namespace& space = open_namespace(std::string(ns));
  space.threshold = threshold;
  if (options_.root) {
    write_file_atomically(*options_.root / std::string(ns) / kConfigFile,
                          canonical_dump(Json{{"contradiction_threshold", threshold}}));
  }
}

StoreCounters MemoryStore::counters() const {
  std::shared_lock lock(mutex_);
  StoreCounters c;
  c.namespaces = spaces_.size();
  for (const auto& [name, space] : spaces_) {
    c.records += space->state.records().size();
    c.open_conflicts += space->state.open_conflicts();
  }
  return c;
}

std::vector<std::string> MemoryStore::recovery_diagnostics() const {
  std::shared_lock lock(mutex_);
  return diagnostics_;
}

}  // namespace memgrain
