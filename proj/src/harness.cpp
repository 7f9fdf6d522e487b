#include "memgrain/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_set>

#include "memgrain/error.hpp"
#include "memgrain/random.hpp"
#include "memgrain/store.hpp"

namespace memgrain::harness {

namespace {

// Corpus timeline: record i is written at kCorpusEpoch + i ms.
constexpr TimestampMs kCorpusEpoch = 1'767'225'600'000;  // 2026-01-01T00:00:00Z
constexpr std::string_view kValueAlphabet = "abcdefghjkmnpqrstuvwxyz";

template <class T>
const T& pick(SplitMix64& rng, const std::vector<T>& items) {
  return items[rng.below(items.size())];
}

std::string number_text(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_number(std::string_view s) {
  double v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) {
    throw Error(ErrorCode::kInvalidArgument, "bad number in report: '" + std::string(s) + "'");
  }
  return v;
}

std::string k_text(std::size_t k) { return k == kUnlimited ? "inf" : std::to_string(k); }

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::vector<StageConfig> shipped_stages() {
  return {{"stage-1", 10, 0.15}, {"stage-2", 40, 0.10}, {"stage-4", 100, 0.05}};
}

StageConfig uncapped_stage() { return {"uncapped", kUnlimited, 0.05}; }

const Vocabulary& vocabulary() {
  static const Vocabulary v{
      {"alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi", "ivan", "judy",
       "mallory", "oscar", "peggy", "rupert", "sybil", "trent", "victor", "walter", "yara", "zane",
       "nina", "omar", "paula", "quinn", "ravi", "sara", "tomas", "uma", "vera", "wes"},
      {"smith", "jones", "garcia", "chen", "patel", "kim", "nguyen", "lopez", "brown", "silva",
       "novak", "cohen", "haas", "ito", "khan", "moreau", "rossi", "weber", "berg", "dahl"},
      {"locker code", "favorite color", "home city", "project deadline", "meeting room", "car model",
       "bank branch", "team lead", "pet name", "laptop brand", "gym day", "parking spot", "wifi password",
       "coffee order", "shoe size", "book club", "dentist", "travel plan", "badge number", "desk location"},
      {"visited", "called", "emailed", "reviewed", "fixed", "deployed", "bought", "cancelled", "booked",
       "planned", "discussed", "shared"},
      {"the report", "a new server", "the budget", "the launch plan", "dinner", "the hotel", "a flight",
       "the contract", "the demo", "the backlog", "the roadmap", "a workshop"},
  };
  return v;
}

SyntheticCorpus generate_corpus(std::uint64_t seed, std::size_t n_distractors, std::size_t n_needles) {
  if (n_needles < 1 || n_distractors < n_needles) {
    throw Error(ErrorCode::kInvalidArgument, "corpus needs n_distractors >= n_needles >= 1");
  }
  const Vocabulary& voc = vocabulary();
  const std::size_t keys = voc.first_names.size() * voc.last_names.size() * voc.attributes.size();
  if (n_needles > keys / 2) {
    throw Error(ErrorCode::kInvalidArgument, "at most " + std::to_string(keys / 2) + " needles are supported");
  }
  SplitMix64 rng(seed);
  std::unordered_set<std::string> values;
  auto fresh_value = [&] {
    for (;;) {
      std::string v(6, ' ');
      for (char& c : v) c = kValueAlphabet[rng.below(kValueAlphabet.size())];
      if (values.insert(v).second) return v;
    }
  };
  auto person = [&] {
    return std::string(pick(rng, voc.first_names)) + " " + std::string(pick(rng, voc.last_names));
  };

  SyntheticCorpus corpus;
  corpus.seed = seed;
  std::set<std::pair<std::string, std::string_view>> needle_keys;
  while (corpus.needles.size() < n_needles) {
    std::string p = person();
    const std::string_view attr = pick(rng, voc.attributes);
    if (!needle_keys.emplace(p, attr).second) continue;
    Needle n;
    n.value = fresh_value();
    n.fact = p + "'s " + std::string(attr) + " is " + n.value;
    n.question = "What is " + p + "'s " + std::string(attr) + "?";
    corpus.needles.push_back(std::move(n));
  }

  std::vector<std::string> distractors;
  distractors.reserve(n_distractors);
  while (distractors.size() < n_distractors) {
    std::string p = person();
    if (rng.unit() < 0.6) {
      const std::string_view attr = pick(rng, voc.attributes);
      if (needle_keys.count({p, attr})) continue;  // one correct record per question
      distractors.push_back(p + "'s " + std::string(attr) + " is " + fresh_value());
    } else {
      distractors.push_back(p + " " + std::string(pick(rng, voc.verbs)) + " " +
                            std::string(pick(rng, voc.objects)) + " on day " +
                            std::to_string(1 + rng.below(365)));
    }
  }

  // Needle positions: a uniform n_needles-subset of all slots, kept in order.
  const std::size_t total = n_distractors + n_needles;
  std::vector<std::size_t> slots(total);
  for (std::size_t i = 0; i < total; ++i) slots[i] = i;
  for (std::size_t i = 0; i < n_needles; ++i) std::swap(slots[i], slots[i + rng.below(total - i)]);
  std::vector<std::size_t> positions(slots.begin(), slots.begin() + static_cast<std::ptrdiff_t>(n_needles));
  std::sort(positions.begin(), positions.end());

  corpus.sentences.reserve(total);
  std::size_t next_needle = 0, next_distractor = 0;
  for (std::size_t i = 0; i < total; ++i) {
    if (next_needle < n_needles && positions[next_needle] == i) {
      corpus.needles[next_needle].position = i;
      corpus.sentences.push_back(corpus.needles[next_needle].fact);
      ++next_needle;
    } else {
      corpus.sentences.push_back(std::move(distractors[next_distractor++]));
    }
  }
  return corpus;
}

double percentile(std::vector<double> samples, double q) {
  if (samples.empty()) return 0.0;
  std::sort(samples.begin(), samples.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(samples.size())));
  return samples[std::clamp<std::size_t>(rank, 1, samples.size()) - 1];
}

StageMetrics run_stage(const SyntheticCorpus& corpus, const StageConfig& config, unsigned search_threads) {
  using Clock = std::chrono::steady_clock;
  auto ms_since = [](Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  };
  const auto n = static_cast<TimestampMs>(corpus.sentences.size());

  StoreOptions options;
  options.detect_conflicts = false;
  options.search_threads = search_threads;
  options.clock = [n] { return kCorpusEpoch + n; };
  options.entropy = seeded_entropy(corpus.seed);
  options.session_duration_ms = n + 1;  // the whole corpus is one session
  MemoryStore store(options);

  const std::string ns = "bench";
  std::vector<RecordId> ids;
  ids.reserve(corpus.sentences.size());
  std::vector<double> ingest;
  ingest.reserve(corpus.sentences.size());
  RememberRequest req;
  req.ns = ns;
  for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
    req.content = corpus.sentences[i];
    req.at = kCorpusEpoch + static_cast<TimestampMs>(i);
    const auto start = Clock::now();
    ids.push_back(store.remember(req).records.front().id);
    ingest.push_back(ms_since(start));
  }

  RetrievalParams params;
  params.max_k = config.max_k;
  params.threshold = config.threshold;
  std::vector<double> retrieve;
  retrieve.reserve(corpus.needles.size());
  std::size_t found = 0, retrieved = 0;
  for (const auto& needle : corpus.needles) {
    const auto start = Clock::now();
    const auto hits = store.recall(ns, needle.question, params);
    retrieve.push_back(ms_since(start));
    retrieved += hits.size();
    const RecordId& target = ids[needle.position];
    if (std::any_of(hits.begin(), hits.end(), [&](const ScoredHit& h) { return h.record.id == target; })) ++found;
  }

  const auto questions = static_cast<double>(corpus.needles.size());
  return {config.name,
          config.max_k,
          config.threshold,
          static_cast<double>(found) / questions,
          static_cast<double>(retrieved) / questions,
          percentile(std::move(ingest), 0.99),
          percentile(std::move(retrieve), 0.99)};
}

std::vector<StageMetrics> run_ablation(const SyntheticCorpus& corpus, const std::vector<StageConfig>& stages,
                                       unsigned search_threads) {
  std::vector<StageMetrics> out;
  for (const auto& stage : stages) out.push_back(run_stage(corpus, stage, search_threads));
  return out;
}

std::string report_csv(const std::vector<StageMetrics>& stages) {
  std::string csv = "stage,k,tau,needle_recall,mean_retrieved,delta_recall,ingest_p99_ms,retrieve_p99_ms\n";
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& m = stages[i];
    csv += m.stage + "," + k_text(m.max_k) + "," + number_text(m.threshold) + "," + number_text(m.needle_recall) +
           "," + number_text(m.mean_retrieved) + ",";
    if (i > 0) csv += number_text(m.needle_recall - stages[i - 1].needle_recall);
    csv += "," + number_text(m.ingest_p99_ms) + "," + number_text(m.retrieve_p99_ms) + "\n";
  }
  return csv;
}

std::vector<StageMetrics> parse_report_csv(std::string_view csv) {
  std::vector<StageMetrics> out;
  std::istringstream in{std::string(csv)};
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cells.size() != 8) throw Error(ErrorCode::kInvalidArgument, "report row needs 8 columns: " + line);
    StageMetrics m;
    m.stage = cells[0];
    m.max_k = cells[1] == "inf" ? kUnlimited : static_cast<std::size_t>(parse_number(cells[1]));
    m.threshold = parse_number(cells[2]);
    m.needle_recall = parse_number(cells[3]);
    m.mean_retrieved = parse_number(cells[4]);
    m.ingest_p99_ms = parse_number(cells[6]);
    m.retrieve_p99_ms = parse_number(cells[7]);
    out.push_back(std::move(m));
  }
  return out;
}

std::string report_markdown(const std::vector<StageMetrics>& stages, std::uint64_t seed, std::size_t n_distractors,
                            std::size_t n_needles) {
  std::string md = "# Retrieval ablation\n\n";
  md += "Seed " + std::to_string(seed) + ", " + std::to_string(n_distractors) + " distractors, " +
        std::to_string(n_needles) + " needles, hash embedder (D=256).\n\n";
  md += "| stage | k | τ | needle recall | Δ recall | mean retrieved | ingest p99 (ms) | retrieve p99 (ms) |\n";
  md += "| --- | ---: | ---: | ---: | ---: | ---: | ---: | ---: |\n";
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& m = stages[i];
    std::string delta;
    if (i > 0) {
      const double d = m.needle_recall - stages[i - 1].needle_recall;
      delta = (d >= 0 ? "+" : "") + fixed(d, 4);
    }
    md += "| " + m.stage + " | " + k_text(m.max_k) + " | " + fixed(m.threshold, 2) + " | " +
          fixed(m.needle_recall, 4) + " | " + delta + " | " + fixed(m.mean_retrieved, 2) + " | " +
          fixed(m.ingest_p99_ms, 3) + " | " + fixed(m.retrieve_p99_ms, 3) + " |\n";
  }
  md += "\nStage 3 (prompt optimization) and stage 5 (model upgrade) change only the answering model and "
        "are not measured here; retrieval is identical to the stage before them.\n";
  return md;
}

}  // namespace memgrain::harness
