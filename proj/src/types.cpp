#include "memgrain/types.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <memory>
#include <mutex>
#include <random>

#include "memgrain/error.hpp"
#include "memgrain/random.hpp"

namespace memgrain {

namespace {

constexpr std::array<MemoryTypeInfo, kMemoryTypeCount> kMemoryTypeTable{{
    {MemoryType::kFact, "fact", MemoryKind::kSemantic, 4},
    {MemoryType::kPreference, "preference", MemoryKind::kSemantic, 4},
    {MemoryType::kDecision, "decision", MemoryKind::kSemantic, 5},
    {MemoryType::kCommitment, "commitment", MemoryKind::kSemantic, 5},
    {MemoryType::kGoal, "goal", MemoryKind::kSemantic, 4},
    {MemoryType::kConstraint, "constraint", MemoryKind::kSemantic, 5},
    {MemoryType::kRelationship, "relationship", MemoryKind::kSemantic, 3},
    {MemoryType::kIdentity, "identity", MemoryKind::kSemantic, 4},
    {MemoryType::kContext, "context", MemoryKind::kSemantic, 3},
    {MemoryType::kEvent, "event", MemoryKind::kEpisodic, 3},
    {MemoryType::kFeedback, "feedback", MemoryKind::kEpisodic, 3},
    {MemoryType::kProcedure, "procedure", MemoryKind::kProcedural, 3},
    {MemoryType::kSkill, "skill", MemoryKind::kProcedural, 3},
}};

constexpr char kHexDigits[] = "0123456789abcdef";

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

char fold(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

}  // namespace

std::span<const MemoryTypeInfo, kMemoryTypeCount> memory_types() { return kMemoryTypeTable; }

const MemoryTypeInfo& info(MemoryType type) {
  return kMemoryTypeTable.at(static_cast<std::size_t>(type));
}

std::string_view to_string(MemoryType type) { return info(type).name; }

std::string_view to_string(MemoryKind kind) {
  switch (kind) {
    case MemoryKind::kEpisodic: return "episodic";
    case MemoryKind::kSemantic: return "semantic";
    case MemoryKind::kProcedural: return "procedural";
  }
  return "semantic";
}

MemoryType memory_type_from_string(std::string_view name) {
  for (const auto& entry : kMemoryTypeTable) {
    if (entry.name.size() != name.size()) continue;
    if (std::equal(name.begin(), name.end(), entry.name.begin(),
                   [](char a, char b) { return fold(a) == b; })) {
      return entry.type;
    }
  }
  throw Error(ErrorCode::kUnknownType, "unknown memory type '" + std::string(name) + "'");
}

std::vector<MemoryType> TypeMask::members() const {
  std::vector<MemoryType> out;
  for (const auto& entry : kMemoryTypeTable) {
    if (contains(entry.type)) out.push_back(entry.type);
  }
  return out;
}

RecordId RecordId::make(TimestampMs clock_ms, Entropy80 entropy) {
  if (clock_ms < 0 || clock_ms >= (TimestampMs{1} << 48)) {
    throw Error(ErrorCode::kClockOutOfRange,
                "clock " + std::to_string(clock_ms) + " ms does not fit in 48 bits");
  }
  const auto high = (static_cast<std::uint64_t>(clock_ms) << 16) | entropy.high;
  return RecordId(high, entropy.low);
}

bool RecordId::is_valid_hex(std::string_view hex) {
  return hex.size() == 32 &&
         std::all_of(hex.begin(), hex.end(), [](char c) { return hex_value(c) >= 0; });
}

RecordId RecordId::parse(std::string_view hex) {
  if (!is_valid_hex(hex)) {
    throw Error(ErrorCode::kInvalidArgument, "malformed record id '" + std::string(hex) + "'");
  }
  std::uint64_t high = 0;
  std::uint64_t low = 0;
  for (std::size_t i = 0; i < 16; ++i) high = (high << 4) | static_cast<std::uint64_t>(hex_value(hex[i]));
  for (std::size_t i = 16; i < 32; ++i) low = (low << 4) | static_cast<std::uint64_t>(hex_value(hex[i]));
  return RecordId(high, low);
}

std::string RecordId::hex() const {
  std::string out(32, '0');
  for (int i = 0; i < 16; ++i) {
    out[15 - i] = kHexDigits[(high_ >> (4 * i)) & 0xF];
    out[31 - i] = kHexDigits[(low_ >> (4 * i)) & 0xF];
  }
  return out;
}

TimestampMs system_now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

EntropySource random_entropy() {
  std::random_device device;
  const std::uint64_t seed = (static_cast<std::uint64_t>(device()) << 32) ^ device() ^
                             static_cast<std::uint64_t>(system_now_ms());
  return seeded_entropy(seed);
}

EntropySource seeded_entropy(std::uint64_t seed) {
  struct State {
    explicit State(std::uint64_t s) : rng(s) {}
    std::mutex mutex;
    SplitMix64 rng;
  };
  auto state = std::make_shared<State>(seed);
  return [state]() {
    std::lock_guard lock(state->mutex);
    Entropy80 e;
    e.high = static_cast<std::uint16_t>(state->rng.next());
    e.low = state->rng.next();
    return e;
  };
}

std::string_view to_string(RecordState s) {
  switch (s) {
    case RecordState::kProvisional: return "provisional";
    case RecordState::kActive: return "active";
    case RecordState::kSuperseded: return "superseded";
    case RecordState::kRetired: return "retired";
  }
  return "active";
}

std::string_view to_string(Provenance p) {
  return p == Provenance::kStated ? "stated" : "inferred";
}

std::string_view to_string(ChangeKind k) {
  switch (k) {
    case ChangeKind::kActivated: return "activated";
    case ChangeKind::kSuperseded: return "superseded";
    case ChangeKind::kRetired: return "retired";
    case ChangeKind::kFlagged: return "flagged";
  }
  return "activated";
}

RecordState record_state_from_string(std::string_view s) {
  for (auto v : {RecordState::kProvisional, RecordState::kActive, RecordState::kSuperseded,
                 RecordState::kRetired}) {
    if (to_string(v) == s) return v;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown record state '" + std::string(s) + "'");
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "stated") return Provenance::kStated;
  if (s == "inferred") return Provenance::kInferred;
  throw Error(ErrorCode::kInvalidArgument, "unknown provenance '" + std::string(s) + "'");
}

ChangeKind change_kind_from_string(std::string_view s) {
  for (auto v : {ChangeKind::kActivated, ChangeKind::kSuperseded, ChangeKind::kRetired,
                 ChangeKind::kFlagged}) {
    if (to_string(v) == s) return v;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown change kind '" + std::string(s) + "'");
}

std::optional<TimestampMs> MemoryRecord::retired_at() const {
  for (const auto& c : changes) {
    if (c.kind == ChangeKind::kRetired) return c.at;
  }
  return std::nullopt;
}

std::vector<TimestampMs> MemoryRecord::change_times() const {
  std::vector<TimestampMs> out{created_at};
  for (const auto& c : changes) out.push_back(c.at);
  return out;
}

bool MemoryRecord::well_formed() const {
  const bool superseded = state == RecordState::kSuperseded;
  if (superseded != (superseded_at.has_value() && superseded_by.has_value())) return false;
  if (superseded_at && *superseded_at < created_at) return false;
  return !content.empty();
}

bool is_valid_namespace(std::string_view ns) {
  if (ns.empty() || ns.size() > 128) return false;
  auto alnum = [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
  };
  if (!alnum(ns.front())) return false;
  return std::all_of(ns.begin(), ns.end(),
                     [&](char c) { return alnum(c) || c == '.' || c == '_' || c == '-'; });
}

void require_valid_namespace(std::string_view ns) {
  if (!is_valid_namespace(ns)) {
    throw Error(ErrorCode::kInvalidArgument,
                "namespace must match [A-Za-z0-9][A-Za-z0-9._-]{0,127}, got '" +
                    std::string(ns) + "'");
  }
}

bool is_valid_utf8(std::string_view text) {
  std::size_t i = 0;
  const auto n = text.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > n) return false;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(text[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Overlong forms, surrogates, and out-of-range scalars.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
      return false;
    }
    i += len;
  }
  return true;
}

std::string format_iso8601(TimestampMs t) {
  using namespace std::chrono;
  const sys_time<milliseconds> tp{milliseconds{t}};
  const auto day = floor<days>(tp);
  const year_month_day ymd{day};
  const hh_mm_ss hms{tp - day};
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lld.%03lldZ",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), static_cast<long long>(hms.hours().count()),
                static_cast<long long>(hms.minutes().count()),
                static_cast<long long>(hms.seconds().count()),
                static_cast<long long>(hms.subseconds().count()));
  return buf;
}

std::optional<TimestampMs> parse_timestamp(std::string_view text) {
  if (text.empty()) return std::nullopt;
  TimestampMs ms = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), ms);
  if (ec == std::errc{} && end == text.data() + text.size()) return ms;

  // YYYY-MM-DDTHH:MM:SS[.mmm]Z
  auto digits = [&](std::size_t pos, std::size_t n) -> std::optional<int> {
    if (pos + n > text.size()) return std::nullopt;
    int v = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
      if (text[i] < '0' || text[i] > '9') return std::nullopt;
      v = v * 10 + (text[i] - '0');
    }
    return v;
  };
  if (text.size() != 20 && text.size() != 24) return std::nullopt;
  if (text[4] != '-' || text[7] != '-' || text[10] != 'T' || text[13] != ':' || text[16] != ':' ||
      text.back() != 'Z') {
    return std::nullopt;
  }
  const auto y = digits(0, 4), mo = digits(5, 2), d = digits(8, 2);
  const auto h = digits(11, 2), mi = digits(14, 2), sec = digits(17, 2);
  std::optional<int> frac = 0;
  if (text.size() == 24) frac = text[19] == '.' ? digits(20, 3) : std::nullopt;
  if (!y || !mo || !d || !h || !mi || !sec || !frac || *h > 23 || *mi > 59 || *sec > 59) return std::nullopt;
  using namespace std::chrono;
  const year_month_day ymd{year{*y}, month{static_cast<unsigned>(*mo)}, day{static_cast<unsigned>(*d)}};
  if (!ymd.ok()) return std::nullopt;
  const auto tp = sys_days{ymd} + hours{*h} + minutes{*mi} + seconds{*sec} + milliseconds{*frac};
  return duration_cast<milliseconds>(tp.time_since_epoch()).count();
}

}  // namespace memgrain
