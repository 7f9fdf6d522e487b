#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memgrain/its_code.hpp"

namespace memgrain {

// UTC milliseconds since the Unix epoch.
using TimestampMs = std::int64_t;

inline constexpr TimestampMs kDefaultSessionDurationMs = 6LL * 60 * 60 * 1000;

enum class MemoryKind { kEpisodic, kSemantic, kProcedural };

// The closed set of memory categories. Values index kMemoryTypeTable.
enum class MemoryType : std::uint8_t {
  kFact,
  kPreference,
  kDecision,
  kCommitment,
  kGoal,
  kConstraint,
  kRelationship,
  kIdentity,
  kContext,
  kEvent,
  kFeedback,
  kProcedure,
  kSkill,
};

inline constexpr std::size_t kMemoryTypeCount = 13;

struct MemoryTypeInfo {
  MemoryType type;
  std::string_view name;
  MemoryKind kind;
  int priority;  // 1..5, metadata only
};

std::span<const MemoryTypeInfo, kMemoryTypeCount> memory_types();
const MemoryTypeInfo& info(MemoryType type);
std::string_view to_string(MemoryType type);
std::string_view to_string(MemoryKind kind);

// Case-insensitive lookup. Throws Error(kUnknownType).
MemoryType memory_type_from_string(std::string_view name);

// Set of memory types as a 13-bit mask.
class TypeMask {
 public:
  TypeMask() = default;
  TypeMask(std::initializer_list<MemoryType> types) {
    for (auto t : types) insert(t);
  }
  void insert(MemoryType t) { bits_ |= bit(t); }
  bool contains(MemoryType t) const { return (bits_ & bit(t)) != 0; }
  bool empty() const { return bits_ == 0; }
  std::vector<MemoryType> members() const;
  bool operator==(const TypeMask&) const = default;

 private:
  static std::uint16_t bit(MemoryType t) {
    return static_cast<std::uint16_t>(1u << static_cast<unsigned>(t));
  }
  std::uint16_t bits_ = 0;
};

struct Entropy80 {
  std::uint16_t high = 0;
  std::uint64_t low = 0;
};

// 128-bit identifier: top 48 bits are creation milliseconds, low 80 bits are
// entropy. The 32-char lowercase hex rendering sorts like the numeric value.
class RecordId {
 public:
  RecordId() = default;

  // Throws Error(kClockOutOfRange) unless 0 <= clock_ms < 2^48.
  static RecordId make(TimestampMs clock_ms, Entropy80 entropy);
  // Throws Error(kInvalidArgument) on anything but 32 hex chars.
  static RecordId parse(std::string_view hex);
  static bool is_valid_hex(std::string_view hex);

  std::string hex() const;
  TimestampMs clock_ms() const { return static_cast<TimestampMs>(high_ >> 16); }
  std::uint64_t high() const { return high_; }
  std::uint64_t low() const { return low_; }

  auto operator<=>(const RecordId&) const = default;

 private:
  RecordId(std::uint64_t high, std::uint64_t low) : high_(high), low_(low) {}
  std::uint64_t high_ = 0;
  std::uint64_t low_ = 0;
};

struct RecordIdHash {
  std::size_t operator()(const RecordId& id) const noexcept {
    return std::hash<std::uint64_t>{}(id.high() * 0x9E3779B97F4A7C15ULL ^ id.low());
  }
};

using EntropySource = std::function<Entropy80()>;
using Clock = std::function<TimestampMs()>;

TimestampMs system_now_ms();
// Entropy from std::random_device, seeded once per source.
EntropySource random_entropy();
// Deterministic entropy stream for tests and the harness.
EntropySource seeded_entropy(std::uint64_t seed);

enum class RecordState { kProvisional, kActive, kSuperseded, kRetired };
enum class Provenance { kStated, kInferred };
enum class ChangeKind { kActivated, kSuperseded, kRetired, kFlagged };

std::string_view to_string(RecordState s);
std::string_view to_string(Provenance p);
std::string_view to_string(ChangeKind k);
RecordState record_state_from_string(std::string_view s);
Provenance provenance_from_string(std::string_view s);
ChangeKind change_kind_from_string(std::string_view s);

struct LifecycleChange {
  TimestampMs at = 0;
  ChangeKind kind = ChangeKind::kActivated;
  bool operator==(const LifecycleChange&) const = default;
};

struct MemoryRecord {
  RecordId id;
  std::string ns;
  std::string session_id;
  MemoryType type = MemoryType::kFact;
  std::string content;
  std::set<std::string> tags;
  BinaryCode code;
  TimestampMs created_at = 0;
  std::optional<TimestampMs> superseded_at;
  RecordState state = RecordState::kActive;
  std::optional<RecordId> superseded_by;
  bool conflict_flag = false;
  Provenance provenance = Provenance::kStated;
  std::vector<LifecycleChange> changes;

  std::optional<TimestampMs> retired_at() const;
  // created_at followed by every transition time.
  std::vector<TimestampMs> change_times() const;
  // Checks the supersession/state invariants.
  bool well_formed() const;

  bool operator==(const MemoryRecord&) const = default;
};

struct Session {
  std::string session_id;
  std::string ns;
  TimestampMs start = 0;
  TimestampMs end = 0;

  bool covers(TimestampMs t) const { return start <= t && t < end; }
  bool operator==(const Session&) const = default;
};

// Namespace names become directory names.
bool is_valid_namespace(std::string_view ns);
void require_valid_namespace(std::string_view ns);

bool is_valid_utf8(std::string_view text);

// "2026-10-16T08:30:00.000Z"
std::string format_iso8601(TimestampMs t);
// Accepts integer milliseconds or UTC "YYYY-MM-DDTHH:MM:SS[.mmm]Z".
std::optional<TimestampMs> parse_timestamp(std::string_view text);

}  // namespace memgrain
