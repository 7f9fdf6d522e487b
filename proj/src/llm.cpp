#include "memgrain/llm.hpp"

#include <cstdlib>

#include <httplib.h>

#include "http_util.hpp"
#include "memgrain/codec.hpp"
#include "memgrain/error.hpp"
#include "memgrain/store.hpp"

namespace memgrain {

std::string render_context_line(const MemoryRecord& record) {
  return "[" + std::string(to_string(record.type)) + " @ " + format_iso8601(record.created_at) + "] " +
         record.content;
}

std::string render_context(std::span<const ScoredHit> hits) {
  std::string out;
  for (const auto& h : hits) {
    if (!out.empty()) out += '\n';
    out += render_context_line(h.record);
  }
  return out;
}

std::string render_prompt(std::string_view question, std::span<const ScoredHit> hits) {
  // Substitute the question last so text inside memories is never re-expanded.
  std::string prompt(kAnswerPrompt);
  const std::string context = render_context(hits);
  const auto c = prompt.find("{context}");
  prompt.replace(c, 9, context);
  const auto q = prompt.find("{question}", c + context.size());
  prompt.replace(q, 10, question);
  return prompt;
}

LlmReply OfflineLlm::complete(std::string_view, std::span<const ScoredHit> hits) {
  if (hits.empty()) return {std::string(kNoRelevantMemory), {}};
  return {hits.front().record.content, {hits.front().record.id}};
}

ExternalLlm::ExternalLlm(std::string endpoint, std::string model, std::optional<std::string> token)
    : endpoint_(std::move(endpoint)), model_(std::move(model)), token_(std::move(token)) {}

LlmReply ExternalLlm::complete(std::string_view question, std::span<const ScoredHit> hits) {
  const auto [base, prefix] = detail::split_url(endpoint_);
  httplib::Client client(base);
  client.set_connection_timeout(5);
  client.set_read_timeout(120);
  httplib::Headers headers;
  if (token_) headers.emplace("Authorization", "Bearer " + *token_);
  const Json body{{"model", model_},
                  {"temperature", 0},
                  {"messages", Json::array({Json{{"role", "user"}, {"content", render_prompt(question, hits)}}})}};
  auto res = client.Post(prefix + "/chat/completions", headers, body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::kLlmUnavailable, "LLM endpoint unreachable: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::kLlmUnavailable, "LLM endpoint returned HTTP " + std::to_string(res->status));
  }
  const Json parsed = Json::parse(res->body, nullptr, false);
  const Json* content = nullptr;
  if (!parsed.is_discarded() && parsed.contains("choices") && parsed["choices"].is_array() &&
      !parsed["choices"].empty()) {
    const Json& choice = parsed["choices"][0];
    if (choice.contains("message") && choice["message"].contains("content") &&
        choice["message"]["content"].is_string()) {
      content = &choice["message"]["content"];
    }
  }
  if (!content) throw Error(ErrorCode::kLlmUnavailable, "LLM endpoint returned a malformed body");
  LlmReply reply{content->get<std::string>(), {}};
  for (const auto& h : hits) reply.citations.push_back(h.record.id);
  return reply;
}

std::unique_ptr<LlmClient> make_llm(const std::optional<std::string>& endpoint, std::string model) {
  if (!endpoint) return std::make_unique<OfflineLlm>();
  std::optional<std::string> token;
  if (const char* t = std::getenv("MEMGRAIN_LLM_TOKEN"); t && *t) token = t;
  return std::make_unique<ExternalLlm>(*endpoint, std::move(model), std::move(token));
}

AnswerResult answer(const MemoryStore& store, LlmClient& llm, std::string_view ns, std::string_view question,
                    const RetrievalParams& params) {
  AnswerResult out;
  out.retrieved = store.recall(ns, question, params);
  if (out.retrieved.empty()) {
    out.answer = std::string(kNoRelevantMemory);
    return out;
  }
  LlmReply reply = llm.generate(question, out.retrieved);
  out.answer = std::move(reply.answer);
  out.citations = std::move(reply.citations);
  return out;
}

}  // namespace memgrain
