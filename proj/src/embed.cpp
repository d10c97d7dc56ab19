#include "statrag/embed.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <future>

#include "json.hpp"
#include "statrag/error.hpp"
#include "statrag/http.hpp"
#include "statrag/random.hpp"

namespace statrag {

namespace {

constexpr std::uint64_t kProjectionSeed = 0x5eed'a11c'e0de'2024ULL;

bool is_word_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

std::uint64_t hash_string(std::string_view s, std::uint64_t seed) {
  return fnv1a64(reinterpret_cast<const unsigned char*>(s.data()), s.size(),
                 0xcbf29ce484222325ULL ^ seed);
}

std::vector<float> projection_row(std::uint64_t key, std::size_t dimension) {
  std::vector<float> row(dimension);
  std::uint64_t state = key;
  for (auto& v : row) {
    const std::uint64_t bits = splitmix64(state);
    v = static_cast<float>(static_cast<double>(bits >> 11) * 0x1.0p-53 * 2.0 - 1.0);
  }
  return row;
}

struct NumericToken {
  std::string name;
  double value;
};

// Pulls numbers out of free text, naming each by the first word of its line
// and the closest word before it. Identifier-embedded digits (q1, ch0) are
// part of words, not numbers.
std::vector<NumericToken> numeric_tokens(std::string_view text) {
  std::vector<NumericToken> out;
  std::string line_head;
  std::string last_word;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '\n') {
      line_head.clear();
      last_word.clear();
      ++i;
      continue;
    }
    if (is_word_start(c)) {
      const std::size_t start = i;
      while (i < text.size() && is_word_char(text[i])) ++i;
      last_word.assign(text.substr(start, i - start));
      if (line_head.empty()) line_head = last_word;
      continue;
    }
    const bool sign = c == '-' && i + 1 < text.size() &&
                      (is_digit(text[i + 1]) || text[i + 1] == '.');
    const bool number_start = is_digit(c) || sign ||
                              (c == '.' && i + 1 < text.size() && is_digit(text[i + 1]));
    if (number_start) {
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(text.data() + i, text.data() + text.size(), value);
      if (ec == std::errc{} && ptr != text.data() + i) {
        if (std::isfinite(value)) out.push_back({line_head + "/" + last_word, value});
        i = static_cast<std::size_t>(ptr - text.data());
        continue;
      }
    }
    ++i;
  }
  return out;
}

}  // namespace

std::string_view to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::RemoteHttp: return "remote_http";
    case ProviderKind::LocalDeterministic: return "local_deterministic";
    case ProviderKind::LocalTextHash: return "local_text_hash";
  }
  return "unknown";
}

void ProviderConfig::validate() const {
  if (batch_size < 1) throw Error(ErrorCode::ConfigInvalid, "embedding batch_size must be >= 1");
  if (dimension < 8) throw Error(ErrorCode::ConfigInvalid, "embedding dimension must be >= 8");
  if (kind == ProviderKind::RemoteHttp && endpoint_url.empty()) {
    throw Error(ErrorCode::ConfigInvalid, "remote embedding provider requires endpoint_url");
  }
  if (concurrency < 1) throw Error(ErrorCode::ConfigInvalid, "embedding concurrency must be >= 1");
}

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "dot of unequal lengths");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return sum;
}

double l2_norm(std::span<const float> a) { return std::sqrt(dot(a, a)); }

double cosine(std::span<const float> a, std::span<const float> b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

void l2_normalize(std::vector<float>& values) {
  double sq = 0.0;
  for (float v : values) sq += static_cast<double>(v) * static_cast<double>(v);
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(ErrorCode::DimensionMismatch, "cannot normalize a zero or non-finite vector");
  }
  for (float& v : values) v = static_cast<float>(static_cast<double>(v) / norm);
}

EmbeddingVector Embedder::embed_one(const std::string& text) {
  return embed(std::span<const std::string>(&text, 1)).front();
}

// --- LocalDeterministicEmbedder ---

LocalDeterministicEmbedder::LocalDeterministicEmbedder(std::size_t dimension,
                                                       std::shared_ptr<UsageLog> usage)
    : dimension_(dimension), usage_(std::move(usage)) {
  if (dimension_ < 8) throw Error(ErrorCode::ConfigInvalid, "local embedder needs d >= 8");
}

std::string LocalDeterministicEmbedder::provider_id() const {
  return "local_deterministic/d" + std::to_string(dimension_);
}

const std::vector<float>& LocalDeterministicEmbedder::row(std::uint64_t key) const {
  std::lock_guard lock(cache_mutex_);
  auto it = row_cache_.find(key);
  if (it == row_cache_.end()) it = row_cache_.emplace(key, projection_row(key, dimension_)).first;
  return it->second;
}

EmbeddingVector LocalDeterministicEmbedder::embed_text(std::string_view text) const {
  const auto tokens = numeric_tokens(text);
  if (tokens.empty()) throw Error(ErrorCode::NoNumericContent, "text contains no numbers");
  std::vector<double> acc(dimension_, 0.0);
  std::unordered_map<std::string, std::uint64_t> occurrences;
  for (const auto& tok : tokens) {
    const std::uint64_t position = occurrences[tok.name]++;
    const std::uint64_t key = hash_string(tok.name, kProjectionSeed) ^ (position * 0x9E3779B97F4A7C15ULL);
    const auto& r = row(key);
    for (std::size_t i = 0; i < dimension_; ++i) acc[i] += tok.value * static_cast<double>(r[i]);
  }
  double sq = 0.0;
  for (double v : acc) sq += v * v;
  EmbeddingVector out;
  out.provider_id = provider_id();
  out.values.resize(dimension_);
  if (sq == 0.0) {
    // All numbers were zero: map to a fixed reference direction.
    out.values = row(hash_string("__all_zero__", kProjectionSeed));
  } else {
    const double norm = std::sqrt(sq);
    for (std::size_t i = 0; i < dimension_; ++i) out.values[i] = static_cast<float>(acc[i] / norm);
  }
  l2_normalize(out.values);
  return out;
}

std::vector<EmbeddingVector> LocalDeterministicEmbedder::embed(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  std::size_t chars = 0;
  for (const auto& t : texts) {
    out.push_back(embed_text(t));
    chars += t.size();
  }
  if (usage_ && !texts.empty()) {
    usage_->record({RequestKind::Embedding, provider_id(), true, chars, 0, "embed"});
  }
  return out;
}

EmbeddingVector local_deterministic_embed(std::string_view text, std::size_t dimension) {
  return LocalDeterministicEmbedder(dimension).embed_text(text);
}

// --- TextHashEmbedder ---

TextHashEmbedder::TextHashEmbedder(std::size_t dimension, std::shared_ptr<UsageLog> usage)
    : dimension_(dimension), usage_(std::move(usage)) {
  if (dimension_ < 8) throw Error(ErrorCode::ConfigInvalid, "text-hash embedder needs d >= 8");
}

std::string TextHashEmbedder::provider_id() const {
  return "local_text_hash/d" + std::to_string(dimension_);
}

std::vector<EmbeddingVector> TextHashEmbedder::embed(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  std::size_t chars = 0;
  for (const auto& text : texts) {
    chars += text.size();
    std::string lowered;
    for (char c : text) lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    std::vector<double> acc(dimension_, 0.0);
    auto add = [&](std::string_view feature, double weight) {
      std::uint64_t state = hash_string(feature, kProjectionSeed);
      for (std::size_t i = 0; i < dimension_; ++i) {
        acc[i] += weight * (static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53 * 2.0 - 1.0);
      }
    };
    const std::string padded = "#" + lowered + "#";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) add(padded.substr(i, 3), 1.0);
    add("__bias__", 1e-3);
    EmbeddingVector v;
    v.provider_id = provider_id();
    v.values.assign(acc.begin(), acc.end());
    l2_normalize(v.values);
    out.push_back(std::move(v));
  }
  if (usage_ && !texts.empty()) {
    usage_->record({RequestKind::Embedding, provider_id(), true, chars, 0, "embed"});
  }
  return out;
}

// --- RemoteEmbedder ---

RemoteEmbedder::RemoteEmbedder(ProviderConfig config, std::shared_ptr<UsageLog> usage)
    : config_(std::move(config)), usage_(std::move(usage)) {
  config_.validate();
  api_key_ = read_api_key(config_.api_key_env_var);
}

std::string RemoteEmbedder::provider_id() const { return "remote/" + config_.model_name; }

std::vector<EmbeddingVector> RemoteEmbedder::embed_request(std::span<const std::string> texts) const {
  nlohmann::json body;
  body["model"] = config_.model_name;
  body["input"] = nlohmann::json::array();
  std::size_t chars = 0;
  for (const auto& t : texts) {
    body["input"].push_back(t);
    chars += t.size();
  }
  RetryPolicy policy{config_.max_retries, config_.backoff_base_ms, config_.timeout_ms};
  const std::string reply = post_json_with_retry(
      config_.endpoint_url, {{"Authorization", "Bearer " + api_key_}}, body.dump(), policy);
  if (usage_) usage_->record({RequestKind::Embedding, provider_id(), false, chars, 0, "embed"});

  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(reply);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ProviderUnavailable, std::string("unparseable embeddings reply: ") + e.what());
  }
  if (!parsed.contains("data") || !parsed["data"].is_array()) {
    throw Error(ErrorCode::ProviderUnavailable, "embeddings reply lacks a data array");
  }
  std::vector<EmbeddingVector> out(texts.size());
  std::vector<bool> seen(texts.size(), false);
  for (const auto& item : parsed["data"]) {
    const auto index = item.value("index", std::size_t{0});
    if (index >= texts.size() || seen[index]) {
      throw Error(ErrorCode::ProviderUnavailable, "embeddings reply has a bad index");
    }
    auto values = item.at("embedding").get<std::vector<float>>();
    if (values.size() != config_.dimension) {
      throw Error(ErrorCode::DimensionMismatch,
                  "provider returned d=" + std::to_string(values.size()) + ", configured d=" +
                      std::to_string(config_.dimension));
    }
    l2_normalize(values);
    out[index] = EmbeddingVector{std::move(values), provider_id()};
    seen[index] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw Error(ErrorCode::ProviderUnavailable, "embeddings reply is missing entries");
  }
  return out;
}

std::vector<EmbeddingVector> RemoteEmbedder::embed(std::span<const std::string> texts) {
  for (const auto& t : texts) {
    if (t.size() > config_.max_text_chars) {
      throw Error(ErrorCode::TextTooLong, std::to_string(t.size()) + " chars exceeds limit of " +
                                              std::to_string(config_.max_text_chars));
    }
  }
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  const std::size_t batch = config_.batch_size;
  std::size_t next = 0;
  while (next < texts.size()) {
    // Up to `concurrency` batches in flight, collected in order.
    std::vector<std::future<std::vector<EmbeddingVector>>> inflight;
    for (std::size_t j = 0; j < config_.concurrency && next < texts.size(); ++j) {
      const std::size_t len = std::min(batch, texts.size() - next);
      auto chunk = texts.subspan(next, len);
      next += len;
      inflight.push_back(std::async(std::launch::async, [this, chunk] { return embed_request(chunk); }));
    }
    for (auto& f : inflight) {
      auto part = f.get();
      std::move(part.begin(), part.end(), std::back_inserter(out));
    }
  }
  return out;
}

std::unique_ptr<Embedder> make_embedder(const ProviderConfig& config, std::shared_ptr<UsageLog> usage) {
  config.validate();
  switch (config.kind) {
    case ProviderKind::RemoteHttp: return std::make_unique<RemoteEmbedder>(config, std::move(usage));
    case ProviderKind::LocalDeterministic:
      return std::make_unique<LocalDeterministicEmbedder>(config.dimension, std::move(usage));
    case ProviderKind::LocalTextHash:
      return std::make_unique<TextHashEmbedder>(config.dimension, std::move(usage));
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown embedding provider kind");
}

std::vector<EmbeddingVector> embed_batch(const ProviderConfig& config, std::span<const std::string> texts,
                                         std::shared_ptr<UsageLog> usage) {
  return make_embedder(config, std::move(usage))->embed(texts);
}

}  // namespace statrag
