#pragma once

// Per-namespace daily Markdown digest: sessions, record counts by type and
// the contradiction report for one UTC calendar day.

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "memgrain/conflict.hpp"
#include "memgrain/types.hpp"

namespace memgrain {

class MemoryStore;

struct SessionDigest {
  Session session;
  std::size_t records = 0;  // written during the day
};

struct DailySummary {
  std::string ns;
  std::string date;  // YYYY-MM-DD
  TimestampMs day_start = 0;
  TimestampMs day_end = 0;  // exclusive
  std::vector<SessionDigest> sessions;  // overlapping the day, by id
  std::vector<std::pair<MemoryType, std::size_t>> counts_by_type;  // all types
  std::vector<ConflictRecord> new_conflicts;          // opened during the day, by id
  std::vector<ConflictRecord> unresolved_conflicts;   // open at day end, by id
  std::vector<MemoryRecord> conflict_records;         // records referenced above, by id
  std::string rendered;

  std::size_t total_records() const;
};

// Parses YYYY-MM-DD into the UTC midnight timestamp. Throws Error(kInvalidArgument).
TimestampMs parse_utc_date(std::string_view date);
std::string format_utc_date(TimestampMs t);

// Builds the digest; when the store has a data directory it is also written to
// {root}/{ns}/daily/{date}.md. Throws Error(kFutureDate) for days after today.
DailySummary generate_daily_summary(const MemoryStore& store, std::string_view ns, std::string_view date);

}  // namespace memgrain
