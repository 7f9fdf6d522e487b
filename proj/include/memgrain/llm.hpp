#pragma once

// Answer generation over retrieved memories. The LLM sits only on the read
// path; nothing in the store calls it.

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memgrain/its.hpp"
#include "memgrain/types.hpp"

namespace memgrain {

class MemoryStore;

inline constexpr std::string_view kNoRelevantMemory = "No relevant memory found.";

// Placeholders {context} and {question} are substituted verbatim.
inline constexpr std::string_view kAnswerPrompt =
    "You answer questions using only the memories listed below.\n"
    "Each memory line reads [type @ creation time] content, most relevant first.\n"
    "If the memories do not contain the answer, say that you do not know.\n"
    "\n"
    "Memories:\n"
    "{context}\n"
    "\n"
    "Question: {question}\n"
    "Answer:";

// "[{type} @ {created_at ISO-8601}] {content}"
std::string render_context_line(const MemoryRecord& record);
std::string render_context(std::span<const ScoredHit> hits);
std::string render_prompt(std::string_view question, std::span<const ScoredHit> hits);

struct LlmReply {
  std::string answer;
  std::vector<RecordId> citations;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;

  // Counts every invocation, then delegates to the backend.
  LlmReply generate(std::string_view question, std::span<const ScoredHit> hits) {
    calls_.fetch_add(1);
    return complete(question, hits);
  }
  std::uint64_t calls() const { return calls_.load(); }

 protected:
  virtual LlmReply complete(std::string_view question, std::span<const ScoredHit> hits) = 0;

 private:
  std::atomic<std::uint64_t> calls_{0};
};

// Deterministic stand-in: the top hit's content, cited by its id.
class OfflineLlm final : public LlmClient {
 protected:
  LlmReply complete(std::string_view question, std::span<const ScoredHit> hits) override;
};

// OpenAI-compatible chat completions endpoint, e.g. "http://localhost:8000/v1".
// Cites every retrieved record, in rank order.
class ExternalLlm final : public LlmClient {
 public:
  ExternalLlm(std::string endpoint, std::string model, std::optional<std::string> token);

 protected:
  LlmReply complete(std::string_view question, std::span<const ScoredHit> hits) override;

 private:
  std::string endpoint_;
  std::string model_;
  std::optional<std::string> token_;
};

// Offline unless `endpoint` is set; the token comes from MEMGRAIN_LLM_TOKEN.
std::unique_ptr<LlmClient> make_llm(const std::optional<std::string>& endpoint, std::string model);

struct AnswerResult {
  std::string answer;
  std::vector<RecordId> citations;
  std::vector<ScoredHit> retrieved;
};

// One recall, then one LLM call when anything was retrieved; with no hits the
// answer is kNoRelevantMemory and nothing is cited.
AnswerResult answer(const MemoryStore& store, LlmClient& llm, std::string_view ns,
                    std::string_view question, const RetrievalParams& params);

}  // namespace memgrain
