#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "statrag/usage.hpp"

namespace statrag {

inline constexpr std::size_t kDefaultEmbeddingDim = 1536;

struct EmbeddingVector {
  std::vector<float> values;
  std::string provider_id;

  std::size_t dimension() const { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

enum class ProviderKind : std::uint8_t {
  RemoteHttp,
  LocalDeterministic,
  LocalTextHash,  // character n-gram hashing; for short label strings offline
};

std::string_view to_string(ProviderKind kind);

struct ProviderConfig {
  ProviderKind kind = ProviderKind::LocalDeterministic;
  std::string endpoint_url;
  std::string api_key_env_var = "OPENAI_API_KEY";
  std::string model_name = "text-embedding-3-small";
  std::size_t dimension = kDefaultEmbeddingDim;
  std::size_t batch_size = 64;
  int max_retries = 5;
  int backoff_base_ms = 200;
  int timeout_ms = 30000;
  std::size_t max_text_chars = 32000;
  std::size_t concurrency = 4;

  void validate() const;
};

class Embedder {
 public:
  virtual ~Embedder() = default;

  /// One L2-normalized vector per text, in input order.
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::string provider_id() const = 0;
  virtual bool is_local() const = 0;

  EmbeddingVector embed_one(const std::string& text);
};

/// Offline embedder over the numeric content of a text. Each number is
/// keyed by (line head word, nearest preceding word, occurrence index) and
/// that key seeds a fixed pseudo-random projection row; the output is the
/// L2-normalized sum of rows scaled by the numbers.
class LocalDeterministicEmbedder final : public Embedder {
 public:
  explicit LocalDeterministicEmbedder(std::size_t dimension, std::shared_ptr<UsageLog> usage = {});

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;
  std::size_t dimension() const override { return dimension_; }
  std::string provider_id() const override;
  bool is_local() const override { return true; }

  EmbeddingVector embed_text(std::string_view text) const;

 private:
  const std::vector<float>& row(std::uint64_t key) const;

  std::size_t dimension_;
  std::shared_ptr<UsageLog> usage_;
  mutable std::mutex cache_mutex_;
  mutable std::unordered_map<std::uint64_t, std::vector<float>> row_cache_;
};

/// Hashes words and character trigrams into a d-dimensional bag.
/// Identical strings map to identical vectors; nothing semantic beyond that.
class TextHashEmbedder final : public Embedder {
 public:
  explicit TextHashEmbedder(std::size_t dimension, std::shared_ptr<UsageLog> usage = {});

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;
  std::size_t dimension() const override { return dimension_; }
  std::string provider_id() const override;
  bool is_local() const override { return true; }

 private:
  std::size_t dimension_;
  std::shared_ptr<UsageLog> usage_;
};

/// OpenAI-style embeddings endpoint client with batching and retries.
class RemoteEmbedder final : public Embedder {
 public:
  RemoteEmbedder(ProviderConfig config, std::shared_ptr<UsageLog> usage = {});

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;
  std::size_t dimension() const override { return config_.dimension; }
  std::string provider_id() const override;
  bool is_local() const override { return false; }

 private:
  std::vector<EmbeddingVector> embed_request(std::span<const std::string> texts) const;

  ProviderConfig config_;
  std::string api_key_;
  std::shared_ptr<UsageLog> usage_;
};

std::unique_ptr<Embedder> make_embedder(const ProviderConfig& config,
                                        std::shared_ptr<UsageLog> usage = {});

std::vector<EmbeddingVector> embed_batch(const ProviderConfig& config,
                                         std::span<const std::string> texts,
                                         std::shared_ptr<UsageLog> usage = {});

EmbeddingVector local_deterministic_embed(std::string_view text, std::size_t dimension);

/// Normalizes in place. Throws Error(DimensionMismatch) for an all-zero or non-finite vector.
void l2_normalize(std::vector<float>& values);

double dot(std::span<const float> a, std::span<const float> b);
double l2_norm(std::span<const float> a);
double cosine(std::span<const float> a, std::span<const float> b);

}  // namespace statrag
