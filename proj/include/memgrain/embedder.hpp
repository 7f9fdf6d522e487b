#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace memgrain {

// Unit-length real vector.
class Embedding {
 public:
  // Throws Error(kInvalidArgument) unless | ||values||_2 - 1 | <= 1e-9.
  explicit Embedding(std::vector<double> values);
  // Scales to unit length; throws Error(kEmptyContent) for the zero vector.
  static Embedding normalized(std::vector<double> values);

  std::size_t dimension() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  bool operator==(const Embedding&) const = default;

 private:
  struct Unchecked {};
  Embedding(std::vector<double> values, Unchecked) : values_(std::move(values)) {}
  std::vector<double> values_;
};

enum class EmbedderBackend { kHash, kExternal };

// Throws Error(kInvalidArgument) unless 0 < dimension <= 65536 and a multiple of 8.
void require_dimension(std::size_t dimension);

struct EmbedderConfig {
  std::size_t dimension = 256;
  EmbedderBackend backend = EmbedderBackend::kHash;
  std::optional<std::string> external_endpoint;
  // Bearer token; make_embedder() falls back to MEMGRAIN_EMBED_TOKEN.
  std::optional<std::string> external_auth;

  // Checks the dimension and that the external backend has an endpoint.
  void validate() const;
};

inline constexpr std::uint64_t kFnvOffsetBasis = 14695981039346656037ULL;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv1a64(std::string_view bytes);

// Lowercases ASCII and splits on every byte that is not [a-z0-9] or >= 0x80.
std::vector<std::string> tokenize(std::string_view text);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dimension() const = 0;
  // Throws Error(kEmptyContent | kExternalUnavailable | kDimensionMismatch).
  virtual Embedding embed(std::string_view text) const = 0;
  // Element-wise embed; a failure carries the index of the first bad text.
  virtual std::vector<Embedding> embed_batch(std::span<const std::string> texts) const;
};

// Feature hashing: FNV-1a 64 per token, index = h mod D, sign from bit 63,
// summed then L2-normalized.
class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dimension = 256);
  std::size_t dimension() const override { return dimension_; }
  Embedding embed(std::string_view text) const override;

 private:
  std::size_t dimension_;
};

// POST {endpoint}/embed {"texts":[...]} -> {"embeddings":[[...],...]}.
class ExternalEmbedder final : public Embedder {
 public:
  ExternalEmbedder(std::string endpoint, std::size_t dimension, std::optional<std::string> token);
  std::size_t dimension() const override { return dimension_; }
  Embedding embed(std::string_view text) const override;
  std::vector<Embedding> embed_batch(std::span<const std::string> texts) const override;

 private:
  std::string endpoint_;
  std::size_t dimension_;
  std::optional<std::string> token_;
};

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& config);

}  // namespace memgrain
