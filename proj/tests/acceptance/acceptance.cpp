// Acceptance run: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails. `--only A1,A8` restricts the run.

#include <algorithm>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <sys/wait.h>
#include <unistd.h>

#include <CLI11.hpp>

#include "its_oracle.hpp"
#include "memgrain/codec.hpp"
#include "memgrain/error.hpp"
#include "memgrain/harness.hpp"
#include "memgrain/llm.hpp"
#include "memgrain/service.hpp"
#include "memgrain/store.hpp"
#include "replay_oracle.hpp"
#include "test_support.hpp"

using namespace memgrain;
using namespace memgrain::testing;
namespace fs = std::filesystem;

namespace {

using SteadyClock = std::chrono::steady_clock;

double ms_since(SteadyClock::time_point start) {
  return std::chrono::duration<double, std::milli>(SteadyClock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fixed(double x, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::vector<std::string> hex_ids(const std::vector<MemoryRecord>& records) {
  std::vector<std::string> out;
  for (const auto& r : records) out.push_back(r.id.hex());
  return out;
}

std::vector<RecordId> hit_ids(const std::vector<ScoredHit>& hits) {
  std::vector<RecordId> out;
  for (const auto& h : hits) out.push_back(h.record.id);
  return out;
}

// ---------------------------------------------------------------------------
// A 100k-record store on disk, shared by the determinism, latency and
// compression checks. Built once, with detection off, on an advancing clock.

constexpr std::size_t kLargeRecords = 100'000;
constexpr std::size_t kLargeNeedles = 500;
const std::string kLargeNs = "large";

class LargeStore {
 public:
  static LargeStore& get() {
    static LargeStore instance;
    return instance;
  }

  const harness::SyntheticCorpus& corpus() const { return corpus_; }
  TimestampMs frozen_at() const { return frozen_at_; }

  // Reopens the store from disk with a frozen clock.
  std::unique_ptr<MemoryStore> open(unsigned threads, bool detect, ManualClock& clock) const {
    clock.set(frozen_at_);
    StoreOptions o = deterministic_options(clock, 1);
    o.root = dir_.path();
    o.search_threads = threads;
    o.detect_conflicts = detect;
    return std::make_unique<MemoryStore>(o);
  }

 private:
  LargeStore() : corpus_(harness::generate_corpus(1, kLargeRecords - kLargeNeedles, kLargeNeedles)) {
    const auto start = SteadyClock::now();
    ManualClock clock(kT0);
    StoreOptions o = deterministic_options(clock, 1);
    o.root = dir_.path();
    o.detect_conflicts = false;
    MemoryStore store(o);
    for (const auto& s : corpus_.sentences) {
      clock.advance(1);
      store.remember(req(kLargeNs, s));
    }
    frozen_at_ = clock.now() + 1;
    std::cerr << "  built " << store.counters().records << "-record store in " << fixed(ms_since(start) / 1000, 1)
              << " s\n";
  }

  TempDir dir_;
  harness::SyntheticCorpus corpus_;
  TimestampMs frozen_at_ = 0;
};

// ---------------------------------------------------------------------------

Outcome a1_determinism() {
  auto& large = LargeStore::get();
  RetrievalParams p;  // tau 0.05, k 100
  const std::string query = large.corpus().needles[0].question;
  std::string reference;
  std::size_t runs = 0, divergent = 0, hits = 0;
  for (unsigned threads : {1u, 4u, 8u}) {
    ManualClock clock(0);
    auto store = large.open(threads, true, clock);  // every iteration is a restart
    for (int rep = 0; rep < 1000; ++rep) {
      const auto result = store->recall(kLargeNs, query, p);
      const std::string bytes = canonical_dump(Json(result));
      if (reference.empty()) {
        reference = bytes;
        hits = result.size();
      }
      divergent += bytes != reference;
      ++runs;
    }
  }
  return {divergent == 0 && hits > 0, std::to_string(runs) + " recalls over 3 restarts at 1/4/8 threads, " +
                                          std::to_string(hits) + " hits each, " + std::to_string(divergent) +
                                          " divergent"};
}

Outcome a2_ingest_latency() {
  auto& large = LargeStore::get();
  ManualClock clock(0);
  auto store = large.open(1, true, clock);
  const auto fresh = harness::generate_corpus(2, 999, 1);
  std::vector<double> samples;
  std::size_t conflicts = 0;
  for (const auto& s : fresh.sentences) {
    clock.advance(1);
    const auto start = SteadyClock::now();
    const auto out = store->remember(req(kLargeNs, s));
    samples.push_back(ms_since(start));
    conflicts += out.opened_conflicts.size();
  }
  const double p99 = harness::percentile(samples, 0.99);
  return {p99 < 10.0, "p99 " + fixed(p99) + " ms over " + std::to_string(samples.size()) +
                          " writes with detection on at " + std::to_string(store->counters().records - samples.size()) +
                          " preloaded records (" + std::to_string(conflicts) + " conflicts opened)"};
}

Outcome a3_recall_latency() {
  auto& large = LargeStore::get();
  ManualClock clock(0);
  auto store = large.open(1, true, clock);
  RetrievalParams p;
  p.threshold = 0.05;
  p.max_k = 100;
  std::vector<double> samples;
  for (const auto& n : large.corpus().needles) {
    const auto start = SteadyClock::now();
    const auto hits = store->recall(kLargeNs, n.question, p);
    samples.push_back(ms_since(start));
  }
  const double p99 = harness::percentile(samples, 0.99);
  return {p99 < 90.0, "p99 " + fixed(p99) + " ms over " + std::to_string(samples.size()) + " recalls at " +
                          std::to_string(store->counters().records) + " records"};
}

Outcome a4_compression() {
  std::size_t bad = 0, checked = 0;
  for (std::size_t dim : {64u, 256u, 1024u}) {
    ManualClock clock(kT0);
    StoreOptions o = deterministic_options(clock);
    o.dimension = dim;
    MemoryStore store(o);
    const auto rec = store.remember(req("c", "Compression check for dimension " + std::to_string(dim))).records[0];
    const std::size_t float_bytes = dim * sizeof(float);
    bad += rec.code.byte_size() != dim / 8;
    bad += rec.code.byte_size() * 32 != float_bytes;
    ++checked;
  }
  auto& large = LargeStore::get();
  ManualClock clock(0);
  auto store = large.open(1, false, clock);
  const std::size_t dim = store->options().dimension;
  store->read(kLargeNs, [&](const NamespaceState* state) {
    for (const auto& r : state->records()) {
      bad += r.code.byte_size() != dim / 8 || r.code.byte_size() * 32 != dim * sizeof(float);
      ++checked;
    }
    return 0;
  });
  return {bad == 0 && checked > kLargeRecords, std::to_string(checked) + " codes checked (D = 64/256/1024 and " +
                                                   std::to_string(checked - 3) + " stored records at D = " +
                                                   std::to_string(dim) + "), " + std::to_string(bad) + " mismatches"};
}

Outcome a5_score_properties() {
  std::size_t counterexamples = 0;
  SplitMix64 rng(5005);
  for (int trial = 0; trial < 10'000; ++trial) {
    const std::size_t dim = 8 * (1 + rng.below(128));
    std::vector<double> w(dim);
    for (auto& x : w) x = 0.001 + 0.999 * rng.unit();
    const ScoringWeights sw(w);
    const BinaryCode q = random_code(rng, dim, rng.unit());
    const BinaryCode d = random_code(rng, dim, rng.unit());
    const double s = its_score(q, d, sw);
    std::size_t hamming = 0;
    for (std::size_t i = 0; i < dim; ++i) hamming += q.bit(i) != d.bit(i);
    const std::vector<double> uniform(dim, 1.0);
    const bool ok = s >= 0.0 && s <= 1.0 && its_score(q, q, sw) == 1.0 && its_score(d, q, sw) == s &&
                    its_score(q, d, uniform) == static_cast<double>(dim - hamming) / static_cast<double>(dim);
    counterexamples += !ok;
  }

  // Monotonicity in tau and k: each looser setting extends the stricter list.
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t dim = 8 * (1 + rng.below(32));
    std::vector<MemoryRecord> records(1 + rng.below(150));
    for (auto& r : records) r = random_record(rng, dim, 1000);
    BitStats stats = BitStats::empty(dim);
    for (const auto& r : records) accumulate(stats, r.code);
    const ScoringWeights w = ScoringWeights::from_stats(stats);
    const BinaryCode q = random_code(rng, dim, 0.5);
    RetrievalParams p;
    p.include_superseded = rng.below(2) == 0;
    p.max_k = kUnlimited;
    std::vector<RecordId> previous;
    for (int step = 20; step >= 0; --step) {
      p.threshold = step / 20.0;
      const auto current = hit_ids(search(q, records, p, w, 2000));
      counterexamples += current.size() < previous.size() ||
                         !std::equal(previous.begin(), previous.end(), current.begin());
      previous = current;
    }
    p.threshold = rng.unit() * 0.6;
    previous.clear();
    for (std::size_t k = 1; k <= records.size() + 1; ++k) {
      p.max_k = k;
      const auto current = hit_ids(search(q, records, p, w, 2000));
      counterexamples += current.size() > k || current.size() < previous.size() ||
                         !std::equal(previous.begin(), previous.end(), current.begin());
      previous = current;
    }
  }

  std::size_t instances = 0;
  for (; instances < 1000; ++instances) {
    const std::size_t dim = 8 * (1 + rng.below(16));
    std::vector<MemoryRecord> records(rng.below(200));
    for (auto& r : records) r = random_record(rng, dim, 1000);
    if (records.size() > 3) records[2].code = records[0].code;
    BitStats stats = BitStats::empty(dim);
    for (const auto& r : records) accumulate(stats, r.code);
    const ScoringWeights w = ScoringWeights::from_stats(stats);
    RetrievalParams p;
    p.threshold = rng.unit();
    p.max_k = 1 + rng.below(50);
    if (rng.below(3) == 0) p.types = TypeMask{static_cast<MemoryType>(rng.below(13))};
    if (rng.below(3) == 0) p.as_of = 1000 + static_cast<TimestampMs>(rng.below(80));
    p.include_superseded = rng.below(2) == 0;
    const BinaryCode q = records.empty() || rng.below(2) ? random_code(rng, dim, 0.5) : records[0].code;
    const unsigned threads = 1 + static_cast<unsigned>(rng.below(8));
    counterexamples += hit_ids(search(q, records, p, w, 5000, threads)) != brute_force(q, records, p, w);
  }
  return {counterexamples == 0, "10000 score cases, 200 monotonicity sweeps, " + std::to_string(instances) +
                                    " brute-force instances, " + std::to_string(counterexamples) +
                                    " counterexamples"};
}

Outcome a6_ablation() {
  bool pass = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto corpus = harness::generate_corpus(seed, kLargeRecords, kLargeNeedles);
    const auto m = harness::run_ablation(corpus, harness::shipped_stages());
    const bool ok = m[0].needle_recall <= m[1].needle_recall && m[1].needle_recall <= m[2].needle_recall &&
                    m[2].needle_recall > m[0].needle_recall;
    pass &= ok;
    detail += (seed > 1 ? "; " : "") + std::string("seed ") + std::to_string(seed) + " " +
              fixed(m[0].needle_recall) + "/" + fixed(m[1].needle_recall) + "/" + fixed(m[2].needle_recall) +
              (ok ? "" : " (out of order)");
  }
  return {pass, "needle recall per stage: " + detail};
}

// ---------------------------------------------------------------------------

Outcome a7_temporal() {
  const char* subjects[] = {"deadline", "budget", "owner", "venue"};
  const char* values[] = {"April", "May", "June", "Berlin", "Alice"};
  std::size_t mismatches = 0, queries = 0, superseded = 0;
  for (std::uint64_t script = 0; script < 500; ++script) {
    TempDir dir;
    ManualClock clock(kT0);
    StoreOptions o = deterministic_options(clock, script);
    o.root = dir.path();
    MemoryStore store(o);
    SplitMix64 rng(10'000 + script);
    std::map<RecordId, std::string> written;
    std::vector<RecordId> order;
    const std::size_t ops = 30 + rng.below(50);
    for (std::size_t op = 0; op < ops; ++op) {
      clock.advance(1 + static_cast<TimestampMs>(rng.below(40)));
      const auto kind = rng.below(10);
      if (kind < 6 || order.size() < 2) {
        const std::string text =
            std::string("The ") + subjects[rng.below(4)] + " is " + values[rng.below(5)];
        for (const auto& r : store.remember(req("t", text, static_cast<MemoryType>(rng.below(3)))).records) {
          written[r.id] = r.content;
          order.push_back(r.id);
        }
      } else if (kind < 8) {
        const auto open = store.list_conflicts("t", ConflictFilter::kOpen);
        if (!open.empty()) {
          store.resolve_conflict(open[rng.below(open.size())].conflict_id,
                                 static_cast<ResolutionAction>(rng.below(3)), "script");
        }
      } else {
        try {
          store.apply_supersession(order[rng.below(order.size())], order[rng.below(order.size())]);
        } catch (const Error& e) {
          mismatches += e.code() != ErrorCode::kIllegalTransition;
        }
      }
    }

    const ReplayOracle oracle(dir.path() / "t" / "events.log");
    mismatches += oracle.record_count() != written.size();
    std::set<TimestampMs> probes{kT0 - 1, clock.now() + 1};
    for (const auto& [id, content] : written) {
      for (TimestampMs t : store.get(id)->change_times()) probes.insert({t - 1, t, t + 1});
    }
    for (TimestampMs t : probes) {
      mismatches += hex_ids(store.as_of("t", t)) != oracle.as_of(t);
      ++queries;
    }
    std::vector<TimestampMs> times(probes.begin(), probes.end());
    for (int i = 0; i < 30; ++i) {
      const TimestampMs a = times[rng.below(times.size())];
      std::optional<TimestampMs> b;
      if (rng.below(3)) b = std::max(a, times[rng.below(times.size())]);
      mismatches += hex_ids(store.changed_since("t", a, b)) != oracle.changed_since(a, b);
      ++queries;
    }

    // Non-destructive: every record is still readable with its original
    // content and visible at its creation time, superseded ones included.
    for (const auto& [id, content] : written) {
      const auto r = store.get(id);
      if (!r || r->content != content) {
        ++mismatches;
        continue;
      }
      if (r->state != RecordState::kSuperseded) continue;
      ++superseded;
      const auto then = hex_ids(store.as_of("t", r->created_at));
      mismatches += std::find(then.begin(), then.end(), id.hex()) == then.end();
      RetrievalParams p;
      p.threshold = 0.0;
      p.max_k = kUnlimited;
      p.as_of = r->created_at;
      const auto hits = hit_ids(store.recall("t", content, p));
      mismatches += std::find(hits.begin(), hits.end(), id) == hits.end();
    }
  }
  return {mismatches == 0 && superseded > 0,
          "500 scripts, " + std::to_string(queries) + " temporal queries against the replay oracle, " +
              std::to_string(superseded) + " superseded records reconstructed, " + std::to_string(mismatches) +
              " mismatches"};
}

// ---------------------------------------------------------------------------
// Conflict suite. A template is a sentence with a person {P}, a key {X} and
// a single value token {V}; a paraphrase contradiction keeps the template and
// both keys and changes only the value.

struct Template {
  MemoryType type;
  std::string text;
  std::vector<std::string> values;
};

std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

const std::vector<Template>& templates() {
  static const std::vector<Template> all = [] {
    const std::string months = "January February March April May June July August September October November";
    const std::string places = "Berlin Lisbon Oslo Denver Austin Madrid Dublin Prague Seoul Lima Cairo Quito";
    const std::string langs = "Rust Go Python Kotlin Haskell Elixir Scala Swift Julia Erlang Zig Crystal";
    const std::string people = "Alice Bruno Chen Dana Emeka Fatima Goran Hana Ivan Jonas Keiko Lars";
    const std::string numbers = "12 15 20 25 30 35 40 45 50 60 75 90";
    const std::string adjectives = "confusing excellent slow solid rushed polished clunky clear dated smooth";
    const std::string days = "Monday Tuesday Wednesday Thursday Friday Saturday Sunday";
    const std::string roles = "architect designer analyst engineer manager researcher auditor writer";
    const std::string stages = "alpha beta staging canary pilot preview";
    const std::string checks = "lint smoke schema security load backup";
    using T = MemoryType;
    std::vector<Template> t = {
        {T::kFact, "The {X} service for {P} is hosted in {V}", words(places)},
        {T::kFact, "{P} keeps the {X} archive in {V}", words(places)},
        {T::kPreference, "{P} prefers {V} for the {X} tooling", words(langs)},
        {T::kPreference, "{P} likes {X} standups on {V}", words(days)},
        {T::kDecision, "We decided to write the {X} module for {P} in {V}", words(langs)},
        {T::kDecision, "{P} chose {V} as the {X} reviewer", words(people)},
        {T::kCommitment, "{P} promised to finish the {X} review by {V}", words(days)},
        {T::kCommitment, "{P} will send the {X} invoice in {V}", words(months)},
        {T::kGoal, "{P} aims to cut {X} costs by {V} percent", words(numbers)},
        {T::kGoal, "{P} wants the {X} launch done by {V}", words(months)},
        {T::kConstraint, "The {X} budget for {P} cannot exceed {V} thousand", words(numbers)},
        {T::kConstraint, "{P} cannot visit the {X} site before {V}", words(months)},
        {T::kRelationship, "{P} reports to {V} on the {X} project", words(people)},
        {T::kRelationship, "{P} mentors {V} in the {X} group", words(people)},
        {T::kIdentity, "{P} is the lead {V} for {X}", words(roles)},
        {T::kIdentity, "{P} joined the {X} team as a {V}", words(roles)},
        {T::kContext, "{P} is moving the {X} cluster to {V}", words(places)},
        {T::kContext, "The {X} rollout {P} owns is in {V}", words(stages)},
        {T::kEvent, "The {X} offsite {P} organised took place in {V}", words(places)},
        {T::kEvent, "{P} presented the {X} roadmap on {V}", words(days)},
        {T::kFeedback, "{P} rated the {X} demo as {V}", words(adjectives)},
        {T::kFeedback, "{P} found the {X} onboarding {V}", words(adjectives)},
        {T::kProcedure, "Before deploying {X} {P} runs the {V} check", words(checks)},
        {T::kProcedure, "To restore {X} {P} starts from the {V} snapshot", words(stages)},
        {T::kSkill, "{P} writes {V} well enough to maintain {X}", words(langs)},
        {T::kSkill, "{P} is certified in {V} for {X}", words(langs)},
    };
    return t;
  }();
  return all;
}

const std::vector<std::string>& persons() {
  static const auto p = words(
      "Amara Bilal Carmen Dmitri Elena Farid Greta Hugo Ines Jamal Kira Leon Maya Nikhil Olga Pavel Quinn Rosa "
      "Samir Tess Umar Vera Wren Xavi Yara Zane");
  return p;
}

const std::vector<std::string>& keys() {
  static const auto k = words(
      "billing search payroll ledger gateway inventory analytics mobile checkout identity reporting storage "
      "messaging scheduler pricing catalog support telemetry onboarding compliance");
  return k;
}

std::string fill(const Template& t, const std::string& p, const std::string& x, const std::string& v) {
  std::string s = t.text;
  auto put = [&s](const std::string& slot, const std::string& value) {
    for (auto pos = s.find(slot); pos != std::string::npos; pos = s.find(slot)) s.replace(pos, slot.size(), value);
  };
  put("{P}", p);
  put("{X}", x);
  put("{V}", v);
  return s;
}

template <class T>
const T& pick(SplitMix64& rng, const std::vector<T>& v) {
  return v[rng.below(v.size())];
}

struct PlantedPair {
  MemoryType type;
  RecordId original;
  RecordId paraphrase;
  std::string paraphrase_text;
  std::optional<RecordId> conflict;
  bool linked = false;
};

// Writes and keeps the record usable as a candidate: any conflict it opens
// is annotated straight away, which activates it.
RecordId write_settled(MemoryStore& store, ManualClock& clock, const std::string& ns, const std::string& text,
                       MemoryType type) {
  clock.advance(1000);
  const auto out = store.remember(req(ns, text, type));
  for (const auto& c : out.opened_conflicts) {
    clock.advance(1);
    store.resolve_conflict(c.conflict_id, ResolutionAction::kAnnotate, "setup");
  }
  return out.records.at(0).id;
}

void write_background(MemoryStore& store, ManualClock& clock, const std::string& ns, SplitMix64& rng) {
  for (std::size_t i = 0; i < 20; ++i) {
    for (std::size_t type = 0; type < kMemoryTypeCount; ++type) {
      const Template& t = templates()[2 * type + rng.below(2)];
      write_settled(store, clock, ns, fill(t, pick(rng, persons()), pick(rng, keys()), pick(rng, t.values)),
                    t.type);
    }
  }
}

Outcome a8_conflicts() {
  std::size_t planted = 0, linked = 0, cross_type_links = 0, cross_ns_links = 0;
  std::size_t transition_errors = 0, resolved = 0, provisional_left = 0, open_left = 0;
  std::vector<double> missed_scores;
  std::map<ResolutionAction, std::size_t> by_action;

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ManualClock clock(kT0);
    MemoryStore store(deterministic_options(clock, 100 + seed));
    SplitMix64 rng(7000 + seed);
    const std::string ns = "agent-" + std::to_string(seed);
    const std::string sibling = ns + "-sibling";
    write_background(store, clock, ns, rng);
    write_background(store, clock, sibling, rng);

    std::vector<PlantedPair> pairs;
    for (std::size_t i = 0; i < 20; ++i) {
      const Template& t = templates()[rng.below(templates().size())];
      const std::string p = pick(rng, persons()), x = pick(rng, keys());
      const std::string v1 = pick(rng, t.values);
      std::string v2;
      do {
        v2 = pick(rng, t.values);
      } while (v2 == v1);
      PlantedPair pair;
      pair.type = t.type;
      pair.original = write_settled(store, clock, ns, fill(t, p, x, v1), t.type);
      pair.paraphrase_text = fill(t, p, x, v2);
      clock.advance(1000);
      const auto out = store.remember(req(ns, pair.paraphrase_text, t.type));
      pair.paraphrase = out.records.at(0).id;
      ++planted;
      for (const auto& c : out.opened_conflicts) {
        pair.conflict = c.conflict_id;
        for (const auto& cand : c.candidates) pair.linked |= cand.id == pair.original;
      }
      if (pair.linked) {
        ++linked;
      } else {
        // Report how close the original came, scored against current weights.
        store.read(ns, [&](const NamespaceState* s) {
          const auto w = ScoringWeights::from_stats(s->stats());
          missed_scores.push_back(its_score(s->find(pair.paraphrase)->code, s->find(pair.original)->code, w));
          return 0;
        });
      }
      pairs.push_back(pair);
    }

    // The same paraphrase under a different type, and in a sibling namespace.
    for (const auto& pair : pairs) {
      clock.advance(1000);
      const auto other = static_cast<MemoryType>((static_cast<std::size_t>(pair.type) + 1) % kMemoryTypeCount);
      for (const auto& c : store.remember(req(ns, pair.paraphrase_text, other)).opened_conflicts) {
        for (const auto& cand : c.candidates) {
          cross_type_links += cand.id == pair.original || store.get(cand.id)->type != other;
        }
      }
      clock.advance(1000);
      for (const auto& c : store.remember(req(sibling, pair.paraphrase_text, pair.type)).opened_conflicts) {
        for (const auto& cand : c.candidates) {
          cross_ns_links += cand.id == pair.original || store.get(cand.id)->ns != sibling;
        }
      }
    }

    // Resolve planted conflicts with rotating actions and check each transition.
    std::size_t turn = 0;
    for (const auto& pair : pairs) {
      if (!pair.conflict) continue;
      const auto before = store.get_conflict(*pair.conflict);
      if (!before || before->state != ConflictState::kOpen) continue;
      const auto action = static_cast<ResolutionAction>(turn++ % 3);
      std::map<RecordId, MemoryRecord> prior;
      prior[before->new_record] = *store.get(before->new_record);
      for (const auto& c : before->candidates) prior[c.id] = *store.get(c.id);
      clock.advance(1000);
      const TimestampMs at = clock.now();
      const auto outcome = store.resolve_conflict(*pair.conflict, action, "suite");
      ++resolved;
      ++by_action[action];

      const auto& res = outcome.conflict.resolution;
      std::size_t errors = !res || res->action != action || outcome.conflict.state != ConflictState::kResolved;
      const auto fresh = *store.get(before->new_record);
      const bool fresh_was_live = prior[fresh.id].state == RecordState::kProvisional ||
                                  prior[fresh.id].state == RecordState::kActive;
      switch (action) {
        case ResolutionAction::kSupersede:
          errors += fresh_was_live && fresh.state != RecordState::kActive;
          errors += !res || res->target != fresh.id;
          for (const auto& c : before->candidates) {
            const auto now = *store.get(c.id);
            if (prior[c.id].state == RecordState::kActive && fresh_was_live) {
              errors += now.state != RecordState::kSuperseded || now.superseded_by != fresh.id ||
                        now.superseded_at != at;
            }
          }
          break;
        case ResolutionAction::kRetain:
          errors += fresh_was_live && fresh.state != RecordState::kRetired;
          errors += !res || res->target != before->candidates.front().id;
          for (const auto& c : before->candidates) errors += store.get(c.id)->state != prior[c.id].state;
          break;
        case ResolutionAction::kAnnotate:
          errors += prior[fresh.id].state == RecordState::kProvisional && fresh.state != RecordState::kActive;
          errors += !fresh.conflict_flag;
          errors += res && res->target.has_value();
          for (const auto& c : before->candidates) {
            const auto now = *store.get(c.id);
            errors += !now.conflict_flag || now.state != prior[c.id].state;
          }
          break;
      }
      transition_errors += errors;
    }

    // Everything still open (cross-type and sibling writes) is annotated.
    for (const auto& space : {ns, sibling}) {
      for (const auto& c : store.list_conflicts(space, ConflictFilter::kOpen)) {
        clock.advance(1);
        store.resolve_conflict(c.conflict_id, ResolutionAction::kAnnotate, "suite");
      }
      open_left += store.list_conflicts(space, ConflictFilter::kOpen).size();
      store.read(space, [&](const NamespaceState* s) {
        for (const auto& r : s->records()) provisional_left += r.state == RecordState::kProvisional;
        return 0;
      });
    }
  }

  const bool pass = linked == planted && cross_type_links == 0 && cross_ns_links == 0 && transition_errors == 0 &&
                    by_action.size() == 3 && provisional_left == 0 && open_left == 0;
  std::string detail = std::to_string(linked) + "/" + std::to_string(planted) + " planted pairs linked";
  if (!missed_scores.empty()) {
    std::sort(missed_scores.begin(), missed_scores.end());
    detail += " (missed pairs scored " + fixed(missed_scores.front(), 4) + ".." + fixed(missed_scores.back(), 4) + ")";
  }
  detail += ", cross-type links " + std::to_string(cross_type_links) + ", cross-namespace links " +
            std::to_string(cross_ns_links) + ", " + std::to_string(resolved) + " rotating resolutions (" +
            std::to_string(by_action[ResolutionAction::kSupersede]) + " supersede, " +
            std::to_string(by_action[ResolutionAction::kRetain]) + " retain, " +
            std::to_string(by_action[ResolutionAction::kAnnotate]) + " annotate) with " +
            std::to_string(transition_errors) + " transition errors, " + std::to_string(provisional_left) +
            " provisional left";
  return {pass, detail};
}

// ---------------------------------------------------------------------------

Outcome a9_zero_llm_writes() {
  ManualClock clock(kT0);
  MemoryStore store(deterministic_options(clock, 9));
  OfflineLlm llm;
  MemoryService service(store, llm);
  const auto corpus = harness::generate_corpus(9, 9990, 10);
  std::size_t created = 0;
  for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
    clock.advance(1);
    const Json body{{"namespace", "w"},
                    {"content", corpus.sentences[i]},
                    {"type", std::string(to_string(static_cast<MemoryType>(i % kMemoryTypeCount)))}};
    created += service.handle({"POST", "/v1/remember", {}, body.dump(), std::nullopt}).status == 201;
  }
  return {created == 10'000 && llm.calls() == 0,
          std::to_string(created) + " writes through the API with detection on (" +
              std::to_string(store.counters().open_conflicts) + " conflicts open), " +
              std::to_string(llm.calls()) + " LLM calls"};
}

// ---------------------------------------------------------------------------
// Crash recovery. The writer runs in a child process (this binary re-executed
// with --crash-writer) so the kill lands on a process that is only writing.

constexpr std::size_t kCrashWrites = 10'000;
const std::string kCrashNs = "crash";

std::vector<RememberRequest> crash_sequence() {
  const auto corpus = harness::generate_corpus(21, kCrashWrites - 100, 100);
  std::vector<RememberRequest> out;
  for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
    out.push_back(req(kCrashNs, corpus.sentences[i], static_cast<MemoryType>(i % 3)));
  }
  return out;
}

StoreOptions crash_options(const ManualClock& clock, std::optional<fs::path> root) {
  StoreOptions o = deterministic_options(clock, 21);
  o.root = std::move(root);
  return o;
}

int run_crash_writer(const fs::path& root) {
  ManualClock clock(kT0);
  MemoryStore store(crash_options(clock, root));
  for (const auto& r : crash_sequence()) {
    clock.advance(1);
    store.remember(r);
  }
  return 0;
}

// State hash after the first n writes of the intended sequence.
std::string prefix_hash(std::size_t n) {
  ManualClock clock(kT0);
  MemoryStore store(crash_options(clock, std::nullopt));
  const auto seq = crash_sequence();
  for (std::size_t i = 0; i < n; ++i) {
    clock.advance(1);
    store.remember(seq[i]);
  }
  return store.snapshot(kCrashNs).state_hash;
}

std::uintmax_t file_size_or_zero(const fs::path& p) {
  std::error_code ec;
  const auto n = fs::file_size(p, ec);
  return ec ? 0 : n;
}

Outcome a10_crash_recovery(const fs::path& self) {
  std::string detail;
  bool pass = true;

  auto spawn = [&](const fs::path& root) {
    const pid_t pid = ::fork();
    if (pid == 0) {
      ::execl(self.c_str(), self.c_str(), "--crash-writer", root.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    return pid;
  };

  // A full run sizes the log so the kills can be spread over it.
  std::uintmax_t full_size = 0;
  {
    TempDir dir;
    const pid_t pid = spawn(dir.path());
    int status = 0;
    ::waitpid(pid, &status, 0);
    full_size = file_size_or_zero(dir.path() / kCrashNs / "events.log");
    ManualClock clock(kT0 + static_cast<TimestampMs>(kCrashWrites) + 1);
    MemoryStore reopened(crash_options(clock, dir.path()));
    const bool ok = WIFEXITED(status) && WEXITSTATUS(status) == 0 &&
                    reopened.counters().records == kCrashWrites &&
                    reopened.snapshot(kCrashNs).state_hash == prefix_hash(kCrashWrites);
    pass &= ok;
    detail += "uninterrupted run " + std::string(ok ? "matches" : "does not match") + " replay";
  }

  for (int trial = 1; trial <= 3; ++trial) {
    TempDir dir;
    const auto log = dir.path() / kCrashNs / "events.log";
    const pid_t pid = spawn(dir.path());
    const std::uintmax_t target = full_size * static_cast<std::uintmax_t>(trial) / 4;
    while (file_size_or_zero(log) < target) {
      if (::waitpid(pid, nullptr, WNOHANG) == pid) break;
      std::this_thread::sleep_for(std::chrono::microseconds(200));
    }
    ::kill(pid, SIGKILL);
    int status = 0;
    ::waitpid(pid, &status, 0);
    const bool killed = WIFSIGNALED(status) && WTERMSIG(status) == SIGKILL;

    ManualClock clock(kT0 + static_cast<TimestampMs>(kCrashWrites) + 1);
    MemoryStore reopened(crash_options(clock, dir.path()));
    const std::size_t n = reopened.counters().records;
    const bool ok = killed && n < kCrashWrites && reopened.snapshot(kCrashNs).state_hash == prefix_hash(n);
    pass &= ok;
    detail += "; kill " + std::to_string(trial) + " after " + std::to_string(n) + " writes " +
              (ok ? "recovers a prefix" : killed ? "does NOT match a prefix" : "missed the run");
  }

  // Checked-in log whose final line is cut short.
  {
    TempDir dir;
    const fs::path fixture = fs::path(MEMGRAIN_FIXTURE_DIR) / "recovery";
    fs::copy(fixture, dir.path(), fs::copy_options::recursive);
    const auto log = dir.path() / "notes" / "events.log";
    std::ifstream in(log, std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t intact = bytes.rfind('\n') + 1;
    std::vector<std::string> intact_ids;
    std::size_t lines = 0;
    std::istringstream rows(bytes.substr(0, intact));
    for (std::string line; std::getline(rows, line); ++lines) {
      const Json e = Json::parse(line);
      if (e["kind"] == "record_written") intact_ids.push_back(e["payload"]["record"]["id"]);
    }
    std::sort(intact_ids.begin(), intact_ids.end());
    const std::string expected = "notes/events.log: discarded truncated event at seq " + std::to_string(lines + 1) +
                                 " (" + std::to_string(bytes.size() - intact) + " bytes)";

    ManualClock clock(kT0 + 24 * 3'600'000);
    StoreOptions o = deterministic_options(clock);
    o.root = dir.path();
    std::vector<std::string> diags;
    std::vector<std::string> recovered;
    {
      MemoryStore store(o);
      diags = store.recovery_diagnostics();
      recovered = hex_ids(store.changed_since("notes", 0));
      std::sort(recovered.begin(), recovered.end());
      store.remember(req("notes", "written after recovery"));
    }
    MemoryStore again(o);
    const bool ok = diags == std::vector<std::string>{expected} && recovered == intact_ids &&
                    again.recovery_diagnostics().empty() && again.counters().records == intact_ids.size() + 1;
    pass &= ok;
    detail += "; torn-tail fixture " + std::string(ok ? "recovers " : "FAILS ") + std::to_string(recovered.size()) +
              " records with \"" + (diags.empty() ? std::string("no diagnostic") : diags[0]) + "\"";
  }
  return {pass, detail};
}

// ---------------------------------------------------------------------------

Outcome a11_single_retrieval() {
  ManualClock clock(kT0);
  MemoryStore store(deterministic_options(clock, 11));
  OfflineLlm llm;
  MemoryService service(store, llm);
  const auto corpus = harness::generate_corpus(11, 2000, 100);
  for (const auto& s : corpus.sentences) {
    clock.advance(1);
    store.remember(req("qa", s));
  }
  std::size_t bad = 0, answered = 0;
  const std::uint64_t start = store.retrieval_queries();
  for (const auto& n : corpus.needles) {
    const std::uint64_t before = store.retrieval_queries();
    const auto r =
        service.handle({"POST", "/v1/answer", {}, Json{{"namespace", "qa"}, {"question", n.question}}.dump(), {}});
    bad += r.status != 200 || store.retrieval_queries() - before != 1;
    answered += !Json::parse(r.body)["citations"].empty();
  }
  const std::uint64_t total = store.retrieval_queries() - start;
  return {bad == 0 && total == 100, "100 answer calls issued " + std::to_string(total) + " retrievals (" +
                                        std::to_string(answered) + " answered from memory, " +
                                        std::to_string(llm.calls()) + " LLM calls)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("memgrain acceptance run");
  std::string only;
  std::string crash_writer;
  app.add_option("--only", only, "Comma-separated criteria to run, e.g. A1,A8");
  app.add_option("--crash-writer", crash_writer)->group("");
  CLI11_PARSE(app, argc, argv);
  if (!crash_writer.empty()) return run_crash_writer(crash_writer);

  const fs::path self = fs::canonical("/proc/self/exe");
  const std::vector<std::tuple<std::string, std::string, std::function<Outcome()>>> criteria = {
      {"A1", "determinism", a1_determinism},
      {"A2", "ingestion latency", a2_ingest_latency},
      {"A3", "retrieval latency", a3_recall_latency},
      {"A4", "compression", a4_compression},
      {"A5", "score properties", a5_score_properties},
      {"A6", "ablation direction", a6_ablation},
      {"A7", "temporal oracle equivalence", a7_temporal},
      {"A8", "conflict suite", a8_conflicts},
      {"A9", "zero-LLM writes", a9_zero_llm_writes},
      {"A10", "crash recovery", [&] { return a10_crash_recovery(self); }},
      {"A11", "single-query answer", a11_single_retrieval},
  };
  std::set<std::string> selected;
  {
    std::istringstream in(only);
    for (std::string id; std::getline(in, id, ',');) {
      if (!id.empty()) selected.insert(id);
    }
  }

  int failures = 0;
  for (const auto& [id, name, fn] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    const auto start = SteadyClock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << id << " " << (o.pass ? "PASS" : "FAIL") << " " << name << ": " << o.detail << " ["
              << fixed(ms_since(start) / 1000, 1) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
