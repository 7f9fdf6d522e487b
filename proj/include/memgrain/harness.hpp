#pragma once

// Staged retrieval ablation over a seeded synthetic corpus. Needle recall
// (was the planted fact retrieved within budget) is the measured quantity.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "memgrain/its.hpp"

namespace memgrain::harness {

struct StageConfig {
  std::string name;
  std::size_t max_k = 100;  // kUnlimited for no cap
  double threshold = 0.05;
};

// (10, 0.15), (40, 0.10), (100, 0.05).
std::vector<StageConfig> shipped_stages();
// Threshold-only gating at the final threshold; not part of the default run.
StageConfig uncapped_stage();

struct Needle {
  std::string fact;
  std::string question;
  std::string value;       // unique token naming the answer
  std::size_t position = 0;  // index into SyntheticCorpus::sentences
  bool operator==(const Needle&) const = default;
};

struct SyntheticCorpus {
  std::uint64_t seed = 0;
  std::vector<std::string> sentences;  // ingest order, needles included
  std::vector<Needle> needles;
  bool operator==(const SyntheticCorpus&) const = default;
};

struct Vocabulary {
  std::vector<std::string_view> first_names, last_names, attributes, verbs, objects;
};
const Vocabulary& vocabulary();

// Throws Error(kInvalidArgument) unless n_distractors >= n_needles >= 1.
SyntheticCorpus generate_corpus(std::uint64_t seed, std::size_t n_distractors, std::size_t n_needles);

struct StageMetrics {
  std::string stage;
  std::size_t max_k = 0;
  double threshold = 0.0;
  double needle_recall = 0.0;
  double mean_retrieved = 0.0;
  double ingest_p99_ms = 0.0;
  double retrieve_p99_ms = 0.0;
  bool operator==(const StageMetrics&) const = default;
};

// Ingests the corpus into a fresh in-memory store, then asks every needle
// question once. Conflict detection is off: the corpus is not a dialogue.
StageMetrics run_stage(const SyntheticCorpus& corpus, const StageConfig& config, unsigned search_threads = 1);

std::vector<StageMetrics> run_ablation(const SyntheticCorpus& corpus, const std::vector<StageConfig>& stages,
                                       unsigned search_threads = 1);

// Nearest-rank percentile, q in (0, 1]. Empty input gives 0.
double percentile(std::vector<double> samples, double q);

// Columns: stage,k,tau,needle_recall,mean_retrieved,delta_recall,ingest_p99_ms,retrieve_p99_ms
std::string report_csv(const std::vector<StageMetrics>& stages);
std::string report_markdown(const std::vector<StageMetrics>& stages, std::uint64_t seed, std::size_t n_distractors,
                            std::size_t n_needles);
// Inverse of report_csv; the delta column is derived and not returned.
std::vector<StageMetrics> parse_report_csv(std::string_view csv);

}  // namespace memgrain::harness
