#include "memgrain/codec.hpp"

namespace memgrain {

namespace {

template <class T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

template <class T>
std::optional<T> optional_from(const Json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<T>();
}

}  // namespace

std::string canonical_dump(const Json& j) {
  return j.dump(-1, ' ', false, Json::error_handler_t::strict);
}

void to_json(Json& j, MemoryType t) { j = std::string(to_string(t)); }
void from_json(const Json& j, MemoryType& t) { t = memory_type_from_string(j.get<std::string>()); }

void to_json(Json& j, const RecordId& id) { j = id.hex(); }
void from_json(const Json& j, RecordId& id) { id = RecordId::parse(j.get<std::string>()); }

void to_json(Json& j, const BinaryCode& code) { j = code.hex(); }
void from_json(const Json& j, BinaryCode& code) { code = BinaryCode::from_hex(j.get<std::string>()); }

void to_json(Json& j, const LifecycleChange& c) {
  j = Json{{"at", c.at}, {"kind", std::string(to_string(c.kind))}};
}
void from_json(const Json& j, LifecycleChange& c) {
  c.at = j.at("at").get<TimestampMs>();
  c.kind = change_kind_from_string(j.at("kind").get<std::string>());
}

void to_json(Json& j, const MemoryRecord& r) {
  j = Json{
      {"id", r.id},
      {"namespace", r.ns},
      {"session_id", r.session_id},
      {"type", r.type},
      {"content", r.content},
      {"tags", r.tags},
      {"code", r.code},
      {"created_at", r.created_at},
      {"superseded_at", optional_json(r.superseded_at)},
      {"state", std::string(to_string(r.state))},
      {"superseded_by", optional_json(r.superseded_by)},
      {"conflict_flag", r.conflict_flag},
      {"provenance", std::string(to_string(r.provenance))},
      {"changes", r.changes},
  };
}

void from_json(const Json& j, MemoryRecord& r) {
  r.id = j.at("id").get<RecordId>();
  r.ns = j.at("namespace").get<std::string>();
  r.session_id = j.at("session_id").get<std::string>();
  r.type = j.at("type").get<MemoryType>();
  r.content = j.at("content").get<std::string>();
  r.tags = j.at("tags").get<std::set<std::string>>();
  r.code = j.at("code").get<BinaryCode>();
  r.created_at = j.at("created_at").get<TimestampMs>();
  r.superseded_at = optional_from<TimestampMs>(j, "superseded_at");
  r.state = record_state_from_string(j.at("state").get<std::string>());
  r.superseded_by = optional_from<RecordId>(j, "superseded_by");
  r.conflict_flag = j.at("conflict_flag").get<bool>();
  r.provenance = provenance_from_string(j.at("provenance").get<std::string>());
  r.changes = j.at("changes").get<std::vector<LifecycleChange>>();
}

void to_json(Json& j, const Session& s) {
  j = Json{{"session_id", s.session_id}, {"namespace", s.ns}, {"start", s.start}, {"end", s.end}};
}
void from_json(const Json& j, Session& s) {
  s.session_id = j.at("session_id").get<std::string>();
  s.ns = j.at("namespace").get<std::string>();
  s.start = j.at("start").get<TimestampMs>();
  s.end = j.at("end").get<TimestampMs>();
}

void to_json(Json& j, const BitStats& s) { j = Json{{"n", s.n}, {"counts", s.counts}}; }
void from_json(const Json& j, BitStats& s) {
  s.n = j.at("n").get<std::uint64_t>();
  s.counts = j.at("counts").get<std::vector<std::uint64_t>>();
}

void to_json(Json& j, const ConflictCandidate& c) { j = Json{{"id", c.id}, {"score", c.score}}; }
void from_json(const Json& j, ConflictCandidate& c) {
  c.id = j.at("id").get<RecordId>();
  c.score = j.at("score").get<double>();
}

void to_json(Json& j, const Resolution& r) {
  j = Json{{"action", std::string(to_string(r.action))},
           {"target", optional_json(r.target)},
           {"at", r.at},
           {"actor", r.actor}};
}
void from_json(const Json& j, Resolution& r) {
  r.action = resolution_action_from_string(j.at("action").get<std::string>());
  r.target = optional_from<RecordId>(j, "target");
  r.at = j.at("at").get<TimestampMs>();
  r.actor = j.at("actor").get<std::string>();
}

void to_json(Json& j, const ConflictRecord& c) {
  j = Json{{"conflict_id", c.conflict_id},
           {"namespace", c.ns},
           {"new_record", c.new_record},
           {"candidates", c.candidates},
           {"opened_at", c.opened_at},
           {"state", std::string(to_string(c.state))},
           {"resolution", optional_json(c.resolution)}};
}
void from_json(const Json& j, ConflictRecord& c) {
  c.conflict_id = j.at("conflict_id").get<RecordId>();
  c.ns = j.at("namespace").get<std::string>();
  c.new_record = j.at("new_record").get<RecordId>();
  c.candidates = j.at("candidates").get<std::vector<ConflictCandidate>>();
  c.opened_at = j.at("opened_at").get<TimestampMs>();
  c.state = conflict_state_from_string(j.at("state").get<std::string>());
  c.resolution = optional_from<Resolution>(j, "resolution");
}

void to_json(Json& j, const ScoredHit& h) {
  j = Json{{"record", h.record}, {"score", h.score}, {"age_ms", h.age_ms}};
}
void from_json(const Json& j, ScoredHit& h) {
  h.record = j.at("record").get<MemoryRecord>();
  h.score = j.at("score").get<double>();
  h.age_ms = j.at("age_ms").get<std::int64_t>();
}

}  // namespace memgrain
