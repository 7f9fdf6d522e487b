#include "memgrain/daily.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "memgrain/error.hpp"
#include "memgrain/store.hpp"

namespace memgrain {

namespace {

constexpr TimestampMs kDayMs = 86'400'000;

std::string score_text(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", s);
  return buf;
}

// Keeps table cells and list items on one line.
std::string one_line(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    if (c == '\n' || c == '\r') {
      out += ' ';
    } else if (c == '|') {
      out += "\\|";
    } else {
      out += c;
    }
  }
  return out;
}

void render_conflict(std::string& md, const ConflictRecord& c,
                     const std::map<RecordId, const MemoryRecord*>& records) {
  auto describe = [&](const RecordId& id) {
    const auto it = records.find(id);
    std::string s = "`" + id.hex() + "`";
    if (it != records.end()) s += " " + std::string(to_string(it->second->type)) + ": " + one_line(it->second->content);
    return s;
  };
  md += "- [" + c.conflict_id.hex() + "](/ui/#/conflicts/" + c.conflict_id.hex() + ") opened " +
        format_iso8601(c.opened_at) + ", " + std::string(to_string(c.state));
  if (c.resolution) {
    md += " (" + std::string(to_string(c.resolution->action)) + " at " + format_iso8601(c.resolution->at) + ")";
  }
  md += "\n  - new: " + describe(c.new_record) + "\n";
  for (const auto& cand : c.candidates) {
    md += "  - candidate (ITS " + score_text(cand.score) + "): " + describe(cand.id) + "\n";
  }
}

void render(DailySummary& s) {
  std::map<RecordId, const MemoryRecord*> by_id;
  for (const auto& r : s.conflict_records) by_id.emplace(r.id, &r);

  std::string md = "# Daily summary: " + s.ns + " " + s.date + "\n\n";
  md += "Window: " + format_iso8601(s.day_start) + " to " + format_iso8601(s.day_end) + " (UTC)\n\n";

  md += "## Sessions\n\n";
  if (s.sessions.empty()) md += "No sessions.\n";
  for (const auto& d : s.sessions) {
    md += "- `" + one_line(d.session.session_id) + "` " + format_iso8601(d.session.start) + " to " +
          format_iso8601(d.session.end) + ", " + std::to_string(d.records) + " records written\n";
  }

  md += "\n## Records by type\n\n| type | count |\n| --- | ---: |\n";
  for (const auto& [type, n] : s.counts_by_type) {
    md += "| " + std::string(to_string(type)) + " | " + std::to_string(n) + " |\n";
  }
  md += "| total | " + std::to_string(s.total_records()) + " |\n";

  md += "\n## New conflicts\n\n";
  if (s.new_conflicts.empty()) md += "No new conflicts.\n";
  for (const auto& c : s.new_conflicts) render_conflict(md, c, by_id);

  md += "\n## Unresolved conflicts\n\n";
  if (s.unresolved_conflicts.empty()) md += "No unresolved conflicts.\n";
  for (const auto& c : s.unresolved_conflicts) render_conflict(md, c, by_id);

  s.rendered = std::move(md);
}

}  // namespace

std::size_t DailySummary::total_records() const {
  std::size_t total = 0;
  for (const auto& [type, n] : counts_by_type) total += n;
  return total;
}

TimestampMs parse_utc_date(std::string_view date) {
  using namespace std::chrono;
  auto bad = [&] { return Error(ErrorCode::kInvalidArgument, "date must be YYYY-MM-DD, got '" + std::string(date) + "'"); };
  if (date.size() != 10 || date[4] != '-' || date[7] != '-') throw bad();
  int parts[3] = {0, 0, 0};
  const std::size_t offsets[3] = {0, 5, 8};
  const std::size_t lengths[3] = {4, 2, 2};
  for (int i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < lengths[i]; ++k) {
      const char c = date[offsets[i] + k];
      if (c < '0' || c > '9') throw bad();
      parts[i] = parts[i] * 10 + (c - '0');
    }
  }
  const year_month_day ymd{year{parts[0]}, month{static_cast<unsigned>(parts[1])},
                           day{static_cast<unsigned>(parts[2])}};
  if (!ymd.ok() || parts[0] < 1970) throw bad();
  return static_cast<TimestampMs>(sys_days{ymd}.time_since_epoch().count()) * kDayMs;
}

std::string format_utc_date(TimestampMs t) { return format_iso8601(t).substr(0, 10); }

DailySummary generate_daily_summary(const MemoryStore& store, std::string_view ns, std::string_view date) {
  require_valid_namespace(ns);
  DailySummary s;
  s.ns = std::string(ns);
  s.day_start = parse_utc_date(date);
  s.day_end = s.day_start + kDayMs;
  s.date = std::string(date);
  const TimestampMs now = store.now();
  const TimestampMs today = now - ((now % kDayMs) + kDayMs) % kDayMs;
  if (s.day_start > today) {
    throw Error(ErrorCode::kFutureDate, "date " + s.date + " is after today (" + format_utc_date(now) + ")");
  }

  std::map<MemoryType, std::size_t> counts;
  for (const auto& t : memory_types()) counts[t.type] = 0;

  store.read(ns, [&](const NamespaceState* state) {
    if (!state) return;
    auto in_day = [&](TimestampMs t) { return t >= s.day_start && t < s.day_end; };
    std::map<std::string, std::size_t> per_session;
    for (const auto& r : state->records()) {
      if (!in_day(r.created_at)) continue;
      ++counts[r.type];
      ++per_session[r.session_id];
    }
    for (const auto& session : state->sessions()) {
      if (session.start < s.day_end && session.end > s.day_start) {
        const auto it = per_session.find(session.session_id);
        s.sessions.push_back({session, it == per_session.end() ? 0 : it->second});
      }
    }
    std::set<RecordId> referenced;
    for (const auto& c : state->conflicts()) {
      const bool is_new = in_day(c.opened_at);
      const bool open_at_end =
          c.opened_at < s.day_end && (!c.resolution || c.resolution->at >= s.day_end);
      if (is_new) s.new_conflicts.push_back(c);
      if (open_at_end) s.unresolved_conflicts.push_back(c);
      if (is_new || open_at_end) {
        referenced.insert(c.new_record);
        for (const auto& cand : c.candidates) referenced.insert(cand.id);
      }
    }
    for (const auto& id : referenced) {
      if (const auto* r = state->find(id)) s.conflict_records.push_back(*r);
    }
  });

  std::sort(s.sessions.begin(), s.sessions.end(),
            [](const SessionDigest& a, const SessionDigest& b) { return a.session.session_id < b.session.session_id; });
  auto by_id = [](const ConflictRecord& a, const ConflictRecord& b) { return a.conflict_id < b.conflict_id; };
  std::sort(s.new_conflicts.begin(), s.new_conflicts.end(), by_id);
  std::sort(s.unresolved_conflicts.begin(), s.unresolved_conflicts.end(), by_id);
  for (const auto& t : memory_types()) s.counts_by_type.emplace_back(t.type, counts[t.type]);
  render(s);

  if (const auto& root = store.options().root) {
    namespace fs = std::filesystem;
    const fs::path dir = *root / s.ns / "daily";
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::kStorageFailure, "cannot create " + dir.string());
    const fs::path file = dir / (s.date + ".md");
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    out << s.rendered;
    if (!out.flush()) throw Error(ErrorCode::kStorageFailure, "cannot write " + file.string());
  }
  return s;
}

}  // namespace memgrain
