#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "statrag/embed.hpp"
#include "statrag/features.hpp"

namespace statrag {

inline constexpr std::size_t kSubsegments = 4;

struct EmbeddingRecord {
  std::int64_t segment_id = 0;
  std::uint8_t subsegment_id = 0;  // k: 0 = Full, 1..3 = Start/Mid/End
  std::string label;
  std::string user_id;
  std::string feature_text;
  EmbeddingVector vector;

  bool operator==(const EmbeddingRecord&) const = default;
};

/// Convex fusion weights over the four sub-segment scores.
struct RetrievalWeights {
  std::array<double, kSubsegments> w = {0.4, 0.2, 0.2, 0.2};

  void validate() const;
  double operator[](std::size_t k) const { return w[k]; }
};

struct ScoredSegment {
  std::int64_t segment_id = 0;
  double score = 0.0;

  bool operator==(const ScoredSegment&) const = default;
};

using RankedList = std::vector<ScoredSegment>;

struct RetrievalContext {
  std::int64_t segment_id = 0;
  std::string label;
  std::string user_id;
  std::array<std::optional<double>, kSubsegments> per_k_scores;
  double fused_score = 0.0;
  std::array<std::string, kSubsegments> feature_texts;
};

/// How candidates absent from some per-k list are scored during fusion.
enum class MissingScorePolicy : std::uint8_t { ZeroFill, Rescore };

/// What the stored texts are: fixed-template statistics or LLM descriptors.
enum class TextMode : std::uint8_t { Template = 0, Descriptor = 1 };

std::string_view to_string(TextMode mode);

/// Descending score, ties by ascending segment id.
bool ranks_before(const ScoredSegment& a, const ScoredSegment& b);

/// Fuses per-k lists: union of candidates, fused = sum_k w_k * s_k with
/// absent entries contributing 0, top-q by fused score.
std::vector<RetrievalContext> weighted_rerank(
    const std::array<RankedList, kSubsegments>& lists, const RetrievalWeights& weights,
    std::size_t q);

/// In-memory multi-vector index. Exact cosine scan per sub-segment.
/// Readers and the writer synchronize through an internal shared mutex.
class VectorStore {
 public:
  explicit VectorStore(std::size_t dimension = kDefaultEmbeddingDim,
                       std::optional<TextMode> mode = std::nullopt);

  VectorStore(const VectorStore& other);
  VectorStore& operator=(const VectorStore& other);

  std::size_t dimension() const { return dimension_; }
  std::optional<TextMode> mode() const;

  /// Inserts (i, 0..3) atomically. The first insert fixes the store's text mode.
  void index_segment(std::int64_t segment_id, const std::array<std::string, kSubsegments>& texts,
                     std::span<const EmbeddingVector> vectors, const std::string& label,
                     const std::string& user_id, TextMode mode = TextMode::Template);
  void index_segment(const FeatureBundle& bundle, std::span<const EmbeddingVector> vectors,
                     const std::string& label, const std::string& user_id);

  /// Top-p records with sub-segment k by cosine similarity.
  RankedList ann_search(std::span<const float> query, std::size_t k, std::size_t p) const;

  /// Four searches, fusion, metadata attached.
  std::vector<RetrievalContext> retrieve(const std::array<EmbeddingVector, kSubsegments>& queries,
                                         const RetrievalWeights& weights, std::size_t p,
                                         std::size_t q,
                                         MissingScorePolicy policy = MissingScorePolicy::ZeroFill) const;

  /// Exact cosine between a query and the stored (i, k) vector.
  double score(std::span<const float> query, std::int64_t segment_id, std::size_t k) const;

  std::size_t record_count() const;
  std::size_t segment_count() const;
  bool contains(std::int64_t segment_id) const;
  std::vector<std::string> labels() const;  // sorted, distinct

  /// Records in insertion order, four per segment.
  std::vector<EmbeddingRecord> records() const;

  bool operator==(const VectorStore& other) const;

 private:
  struct Segment {
    std::int64_t segment_id;
    std::string label;
    std::string user_id;
    std::array<std::string, kSubsegments> texts;
    std::string provider_id;
  };

  std::size_t dimension_;
  std::optional<TextMode> mode_;
  std::vector<Segment> segments_;
  std::unordered_map<std::int64_t, std::size_t> slot_of_;
  // Per-k row-major matrices, one row per segment slot, plus row norms.
  std::array<std::vector<float>, kSubsegments> matrix_;
  std::array<std::vector<double>, kSubsegments> norms_;
  mutable std::shared_mutex mutex_;

  friend void save_store(const VectorStore& store, const std::filesystem::path& path);
  friend VectorStore load_store(const std::filesystem::path& path);
};

/// Binary format: header (magic, version, d, count, checksum) followed by
/// records; strings length-prefixed UTF-8, floats little-endian IEEE-754.
void save_store(const VectorStore& store, const std::filesystem::path& path);
VectorStore load_store(const std::filesystem::path& path);

}  // namespace statrag
