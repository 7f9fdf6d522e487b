#include "memgrain/embedder.hpp"

#include <cmath>
#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "http_util.hpp"
#include "memgrain/error.hpp"

namespace memgrain {

namespace {

constexpr double kNormTolerance = 1e-9;

bool is_token_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c >= 0x80;
}

unsigned char lower(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<unsigned char>(c - 'A' + 'a') : c;
}

}  // namespace

Embedding::Embedding(std::vector<double> values) : values_(std::move(values)) {
  double sq = 0.0;
  for (double v : values_) sq += v * v;
  if (std::abs(std::sqrt(sq) - 1.0) > kNormTolerance) {
    throw Error(ErrorCode::kInvalidArgument, "embedding is not unit length");
  }
}

Embedding Embedding::normalized(std::vector<double> values) {
  double sq = 0.0;
  for (double v : values) sq += v * v;
  if (!(sq > 0.0) || !std::isfinite(sq)) {
    throw Error(ErrorCode::kEmptyContent, "embedding has zero or non-finite norm");
  }
  const double norm = std::sqrt(sq);
  for (double& v : values) v /= norm;
  return Embedding(std::move(values));
}

void require_dimension(std::size_t dimension) {
  if (dimension == 0 || dimension % 8 != 0 || dimension > 65536) {
    throw Error(ErrorCode::kInvalidArgument,
                "embedding dimension must be a positive multiple of 8 (<= 65536), got " +
                    std::to_string(dimension));
  }
}

void EmbedderConfig::validate() const {
  require_dimension(dimension);
  if (backend == EmbedderBackend::kExternal && !external_endpoint) {
    throw Error(ErrorCode::kInvalidArgument, "external embedder needs an endpoint");
  }
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = kFnvOffsetBasis;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= kFnvPrime;
  }
  return h;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto c = lower(static_cast<unsigned char>(ch));
    if (is_token_byte(c)) {
      current.push_back(static_cast<char>(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::vector<Embedding> Embedder::embed_batch(std::span<const std::string> texts) const {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    try {
      out.push_back(embed(texts[i]));
    } catch (Error& e) {
      e.index = i;
      throw;
    }
  }
  return out;
}

HashEmbedder::HashEmbedder(std::size_t dimension) : dimension_(dimension) {
  require_dimension(dimension);
}

Embedding HashEmbedder::embed(std::string_view text) const {
  std::vector<double> acc(dimension_, 0.0);
  bool any = false;
  std::uint64_t h = kFnvOffsetBasis;
  bool in_token = false;
  auto flush = [&] {
    const std::size_t index = static_cast<std::size_t>(h % dimension_);
    acc[index] += (h >> 63) == 0 ? 1.0 : -1.0;
    any = true;
  };
  for (char ch : text) {
    const auto c = lower(static_cast<unsigned char>(ch));
    if (is_token_byte(c)) {
      h ^= c;
      h *= kFnvPrime;
      in_token = true;
    } else if (in_token) {
      flush();
      h = kFnvOffsetBasis;
      in_token = false;
    }
  }
  if (in_token) flush();
  if (!any) throw Error(ErrorCode::kEmptyContent, "text has no alphanumeric tokens");
  return Embedding::normalized(std::move(acc));
}

ExternalEmbedder::ExternalEmbedder(std::string endpoint, std::size_t dimension,
                                   std::optional<std::string> token)
    : endpoint_(std::move(endpoint)), dimension_(dimension), token_(std::move(token)) {
  require_dimension(dimension);
}

Embedding ExternalEmbedder::embed(std::string_view text) const {
  const std::string one(text);
  return embed_batch(std::span<const std::string>(&one, 1)).front();
}

std::vector<Embedding> ExternalEmbedder::embed_batch(std::span<const std::string> texts) const {
  if (texts.empty()) return {};
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (tokenize(texts[i]).empty()) {
      Error e(ErrorCode::kEmptyContent, "text has no alphanumeric tokens");
      e.index = i;
      throw e;
    }
  }
  const auto [base, prefix] = detail::split_url(endpoint_);
  httplib::Client client(base);
  client.set_connection_timeout(5);
  client.set_read_timeout(30);
  httplib::Headers headers;
  if (token_) headers.emplace("Authorization", "Bearer " + *token_);
  const nlohmann::json body{{"texts", texts}};
  auto res = client.Post(prefix + "/embed", headers, body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::kExternalUnavailable,
                "embedding service unreachable: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::kExternalUnavailable,
                "embedding service returned HTTP " + std::to_string(res->status));
  }
  nlohmann::json parsed = nlohmann::json::parse(res->body, nullptr, false);
  if (parsed.is_discarded() || !parsed.contains("embeddings") || !parsed["embeddings"].is_array()) {
    throw Error(ErrorCode::kExternalUnavailable, "embedding service returned a malformed body");
  }
  const auto& rows = parsed["embeddings"];
  if (rows.size() != texts.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "embedding service returned " +
                                                   std::to_string(rows.size()) + " vectors for " +
                                                   std::to_string(texts.size()) + " texts");
  }
  std::vector<Embedding> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (!row.is_array() || row.size() != dimension_) {
      Error e(ErrorCode::kDimensionMismatch,
              "expected dimension " + std::to_string(dimension_) + " from embedding service");
      e.index = i;
      throw e;
    }
    std::vector<double> values;
    values.reserve(dimension_);
    for (const auto& v : row) {
      if (!v.is_number()) {
        throw Error(ErrorCode::kExternalUnavailable, "non-numeric embedding component");
      }
      values.push_back(v.get<double>());
    }
    try {
      out.push_back(Embedding::normalized(std::move(values)));
    } catch (Error& e) {
      e.index = i;
      throw;
    }
  }
  return out;
}

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& config) {
  config.validate();
  if (config.backend == EmbedderBackend::kHash) {
    return std::make_unique<HashEmbedder>(config.dimension);
  }
  auto token = config.external_auth;
  if (!token) {
    if (const char* env = std::getenv("MEMGRAIN_EMBED_TOKEN"); env && *env) token = env;
  }
  return std::make_unique<ExternalEmbedder>(*config.external_endpoint, config.dimension, token);
}

}  // namespace memgrain
