#include "statrag/store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <set>

#include "statrag/error.hpp"
#include "statrag/random.hpp"

namespace statrag {

std::string_view to_string(TextMode mode) {
  return mode == TextMode::Template ? "template" : "descriptor";
}

void RetrievalWeights::validate() const {
  double sum = 0.0;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw Error(ErrorCode::InvalidWeights, "weights must be >= 0");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidWeights, "weights must sum to 1, got " + std::to_string(sum));
  }
}

bool ranks_before(const ScoredSegment& a, const ScoredSegment& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.segment_id < b.segment_id;
}

std::vector<RetrievalContext> weighted_rerank(const std::array<RankedList, kSubsegments>& lists,
                                              const RetrievalWeights& weights, std::size_t q) {
  if (q < 1) throw Error(ErrorCode::ConfigInvalid, "q must be >= 1");
  std::map<std::int64_t, std::array<std::optional<double>, kSubsegments>> candidates;
  for (std::size_t k = 0; k < kSubsegments; ++k) {
    for (const auto& hit : lists[k]) {
      auto& slot = candidates[hit.segment_id][k];
      if (!slot || hit.score > *slot) slot = hit.score;
    }
  }
  if (candidates.empty()) throw Error(ErrorCode::NoCandidates, "every per-subsegment list is empty");

  std::vector<RetrievalContext> fused;
  fused.reserve(candidates.size());
  for (const auto& [id, scores] : candidates) {
    RetrievalContext ctx;
    ctx.segment_id = id;
    ctx.per_k_scores = scores;
    double total = 0.0;
    for (std::size_t k = 0; k < kSubsegments; ++k) {
      if (scores[k]) total += weights[k] * *scores[k];
    }
    ctx.fused_score = total;
    fused.push_back(std::move(ctx));
  }
  const std::size_t keep = std::min(q, fused.size());
  std::partial_sort(fused.begin(), fused.begin() + static_cast<std::ptrdiff_t>(keep), fused.end(),
                    [](const RetrievalContext& a, const RetrievalContext& b) {
                      return ranks_before({a.segment_id, a.fused_score}, {b.segment_id, b.fused_score});
                    });
  fused.resize(keep);
  return fused;
}

// --- VectorStore ---

VectorStore::VectorStore(std::size_t dimension, std::optional<TextMode> mode)
    : dimension_(dimension), mode_(mode) {
  if (dimension_ == 0) throw Error(ErrorCode::DimensionMismatch, "store dimension must be positive");
}

VectorStore::VectorStore(const VectorStore& other) {
  std::shared_lock lock(other.mutex_);
  dimension_ = other.dimension_;
  mode_ = other.mode_;
  segments_ = other.segments_;
  slot_of_ = other.slot_of_;
  matrix_ = other.matrix_;
  norms_ = other.norms_;
}

VectorStore& VectorStore::operator=(const VectorStore& other) {
  if (this == &other) return *this;
  VectorStore copy(other);
  std::unique_lock lock(mutex_);
  dimension_ = copy.dimension_;
  mode_ = copy.mode_;
  segments_ = std::move(copy.segments_);
  slot_of_ = std::move(copy.slot_of_);
  matrix_ = std::move(copy.matrix_);
  norms_ = std::move(copy.norms_);
  return *this;
}

std::optional<TextMode> VectorStore::mode() const {
  std::shared_lock lock(mutex_);
  return mode_;
}

void VectorStore::index_segment(std::int64_t segment_id, const std::array<std::string, kSubsegments>& texts,
                                std::span<const EmbeddingVector> vectors, const std::string& label,
                                const std::string& user_id, TextMode mode) {
  if (vectors.size() != kSubsegments) {
    throw Error(ErrorCode::DimensionMismatch, "expected 4 vectors per segment");
  }
  for (const auto& v : vectors) {
    if (v.dimension() != dimension_) {
      throw Error(ErrorCode::DimensionMismatch, "vector d=" + std::to_string(v.dimension()) +
                                                    ", store d=" + std::to_string(dimension_));
    }
  }
  std::unique_lock lock(mutex_);
  if (mode_ && *mode_ != mode) {
    throw Error(ErrorCode::ModeMismatch, "store is " + std::string(to_string(*mode_)) +
                                             "-mode; refusing a " + std::string(to_string(mode)) + " record");
  }
  if (slot_of_.contains(segment_id)) {
    throw Error(ErrorCode::DuplicateSegment, "segment " + std::to_string(segment_id) + " already indexed");
  }
  mode_ = mode;
  slot_of_.emplace(segment_id, segments_.size());
  segments_.push_back({segment_id, label, user_id, texts, vectors.front().provider_id});
  for (std::size_t k = 0; k < kSubsegments; ++k) {
    const auto& values = vectors[k].values;
    matrix_[k].insert(matrix_[k].end(), values.begin(), values.end());
    norms_[k].push_back(l2_norm(values));
  }
}

void VectorStore::index_segment(const FeatureBundle& bundle, std::span<const EmbeddingVector> vectors,
                                const std::string& label, const std::string& user_id) {
  index_segment(bundle.segment_id, bundle.texts(), vectors, label, user_id, TextMode::Template);
}

RankedList VectorStore::ann_search(std::span<const float> query, std::size_t k, std::size_t p) const {
  if (k >= kSubsegments) throw Error(ErrorCode::ConfigInvalid, "sub-segment id must be in 0..3");
  if (p < 1) throw Error(ErrorCode::ConfigInvalid, "p must be >= 1");
  if (query.size() != dimension_) {
    throw Error(ErrorCode::DimensionMismatch, "query d=" + std::to_string(query.size()) +
                                                  ", store d=" + std::to_string(dimension_));
  }
  std::shared_lock lock(mutex_);
  if (segments_.empty()) throw Error(ErrorCode::EmptyIndex, "store has no records");
  const double qnorm = l2_norm(query);
  RankedList hits;
  hits.reserve(segments_.size());
  const auto& mat = matrix_[k];
  for (std::size_t slot = 0; slot < segments_.size(); ++slot) {
    const std::span<const float> row(mat.data() + slot * dimension_, dimension_);
    const double denom = qnorm * norms_[k][slot];
    const double s = denom == 0.0 ? 0.0 : dot(query, row) / denom;
    hits.push_back({segments_[slot].segment_id, s});
  }
  const std::size_t keep = std::min(p, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), ranks_before);
  hits.resize(keep);
  return hits;
}

double VectorStore::score(std::span<const float> query, std::int64_t segment_id, std::size_t k) const {
  std::shared_lock lock(mutex_);
  const auto it = slot_of_.find(segment_id);
  if (it == slot_of_.end()) throw Error(ErrorCode::NoCandidates, "unknown segment");
  const std::span<const float> row(matrix_[k].data() + it->second * dimension_, dimension_);
  const double denom = l2_norm(query) * norms_[k][it->second];
  return denom == 0.0 ? 0.0 : dot(query, row) / denom;
}

std::vector<RetrievalContext> VectorStore::retrieve(
    const std::array<EmbeddingVector, kSubsegments>& queries, const RetrievalWeights& weights,
    std::size_t p, std::size_t q, MissingScorePolicy policy) const {
  weights.validate();
  std::array<RankedList, kSubsegments> lists;
  for (std::size_t k = 0; k < kSubsegments; ++k) {
    // A zero weight cannot change the fused order; skip the scan.
    if (weights[k] > 0.0) lists[k] = ann_search(queries[k].values, k, p);
  }
  if (policy == MissingScorePolicy::Rescore) {
    std::set<std::int64_t> ids;
    for (const auto& l : lists) {
      for (const auto& h : l) ids.insert(h.segment_id);
    }
    for (std::size_t k = 0; k < kSubsegments; ++k) {
      if (weights[k] == 0.0) continue;
      std::set<std::int64_t> present;
      for (const auto& h : lists[k]) present.insert(h.segment_id);
      for (auto id : ids) {
        if (!present.contains(id)) lists[k].push_back({id, score(queries[k].values, id, k)});
      }
    }
  }
  auto contexts = weighted_rerank(lists, weights, q);
  std::shared_lock lock(mutex_);
  for (auto& ctx : contexts) {
    const auto& seg = segments_[slot_of_.at(ctx.segment_id)];
    ctx.label = seg.label;
    ctx.user_id = seg.user_id;
    ctx.feature_texts = seg.texts;
  }
  return contexts;
}

std::size_t VectorStore::record_count() const {
  std::shared_lock lock(mutex_);
  return segments_.size() * kSubsegments;
}

std::size_t VectorStore::segment_count() const {
  std::shared_lock lock(mutex_);
  return segments_.size();
}

bool VectorStore::contains(std::int64_t segment_id) const {
  std::shared_lock lock(mutex_);
  return slot_of_.contains(segment_id);
}

std::vector<std::string> VectorStore::labels() const {
  std::shared_lock lock(mutex_);
  std::set<std::string> set;
  for (const auto& s : segments_) set.insert(s.label);
  return {set.begin(), set.end()};
}

std::vector<EmbeddingRecord> VectorStore::records() const {
  std::shared_lock lock(mutex_);
  std::vector<EmbeddingRecord> out;
  out.reserve(segments_.size() * kSubsegments);
  for (std::size_t slot = 0; slot < segments_.size(); ++slot) {
    const auto& seg = segments_[slot];
    for (std::size_t k = 0; k < kSubsegments; ++k) {
      EmbeddingRecord rec;
      rec.segment_id = seg.segment_id;
      rec.subsegment_id = static_cast<std::uint8_t>(k);
      rec.label = seg.label;
      rec.user_id = seg.user_id;
      rec.feature_text = seg.texts[k];
      const auto first = matrix_[k].begin() + static_cast<std::ptrdiff_t>(slot * dimension_);
      rec.vector.values.assign(first, first + static_cast<std::ptrdiff_t>(dimension_));
      rec.vector.provider_id = seg.provider_id;
      out.push_back(std::move(rec));
    }
  }
  return out;
}

bool VectorStore::operator==(const VectorStore& other) const {
  if (this == &other) return true;
  if (dimension() != other.dimension() || mode() != other.mode()) return false;
  const auto a = records();
  const auto b = other.records();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& ra = a[i];
    const auto& rb = b[i];
    if (ra.segment_id != rb.segment_id || ra.subsegment_id != rb.subsegment_id ||
        ra.label != rb.label || ra.user_id != rb.user_id || ra.feature_text != rb.feature_text ||
        ra.vector.provider_id != rb.vector.provider_id) {
      return false;
    }
    // Bitwise, so NaN payloads and signed zeros count.
    if (std::memcmp(ra.vector.values.data(), rb.vector.values.data(),
                    ra.vector.values.size() * sizeof(float)) != 0) {
      return false;
    }
  }
  return true;
}

// --- persistence ---

namespace {

constexpr char kMagic[8] = {'S', 'R', 'A', 'G', 'S', 'T', 'O', 'R'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderSize = 8 + 4 + 4 + 8 + 8;
constexpr std::uint8_t kNoMode = 0xFF;

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t len = u32();
    need(len);
    std::string s(data_.substr(pos_, len));
    pos_ += len;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(ErrorCode::CorruptStore, "unexpected end of store data");
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

std::uint64_t checksum(std::string_view body) {
  return fnv1a64(reinterpret_cast<const unsigned char*>(body.data()), body.size());
}

}  // namespace

void save_store(const VectorStore& store, const std::filesystem::path& path) {
  std::shared_lock lock(store.mutex_);
  ByteWriter body;
  body.u8(store.mode_ ? static_cast<std::uint8_t>(*store.mode_) : kNoMode);
  for (std::size_t slot = 0; slot < store.segments_.size(); ++slot) {
    const auto& seg = store.segments_[slot];
    for (std::size_t k = 0; k < kSubsegments; ++k) {
      body.u64(static_cast<std::uint64_t>(seg.segment_id));
      body.u8(static_cast<std::uint8_t>(k));
      body.str(seg.label);
      body.str(seg.user_id);
      body.str(seg.provider_id);
      body.str(seg.texts[k]);
      const float* row = store.matrix_[k].data() + slot * store.dimension_;
      for (std::size_t i = 0; i < store.dimension_; ++i) body.f32(row[i]);
    }
  }
  ByteWriter header;
  header.bytes().append(kMagic, sizeof(kMagic));
  header.u32(kVersion);
  header.u32(static_cast<std::uint32_t>(store.dimension_));
  header.u64(static_cast<std::uint64_t>(store.segments_.size() * kSubsegments));
  header.u64(checksum(body.bytes()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(header.bytes().data(), static_cast<std::streamsize>(header.bytes().size()));
  out.write(body.bytes().data(), static_cast<std::streamsize>(body.bytes().size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

VectorStore load_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < kHeaderSize) throw Error(ErrorCode::CorruptStore, "file shorter than header");
  if (std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::CorruptStore, "bad magic");
  }
  ByteReader header(std::string_view(data).substr(sizeof(kMagic), kHeaderSize - sizeof(kMagic)));
  const std::uint32_t version = header.u32();
  if (version != kVersion) throw Error(ErrorCode::CorruptStore, "unsupported version " + std::to_string(version));
  const std::uint32_t dimension = header.u32();
  const std::uint64_t count = header.u64();
  const std::uint64_t expected = header.u64();
  const std::string_view body = std::string_view(data).substr(kHeaderSize);
  if (checksum(body) != expected) throw Error(ErrorCode::CorruptStore, "checksum mismatch");
  if (dimension == 0 || count % kSubsegments != 0) throw Error(ErrorCode::CorruptStore, "bad header counts");

  ByteReader reader(body);
  const std::uint8_t mode_byte = reader.u8();
  std::optional<TextMode> mode;
  if (mode_byte != kNoMode) {
    if (mode_byte > 1) throw Error(ErrorCode::CorruptStore, "bad text mode");
    mode = static_cast<TextMode>(mode_byte);
  }
  VectorStore store(dimension, mode);
  for (std::uint64_t s = 0; s < count / kSubsegments; ++s) {
    std::array<std::string, kSubsegments> texts;
    std::vector<EmbeddingVector> vectors(kSubsegments);
    std::int64_t segment_id = 0;
    std::string label, user;
    for (std::size_t k = 0; k < kSubsegments; ++k) {
      const auto id = static_cast<std::int64_t>(reader.u64());
      const std::uint8_t kk = reader.u8();
      std::string rec_label = reader.str();
      std::string rec_user = reader.str();
      vectors[k].provider_id = reader.str();
      texts[k] = reader.str();
      vectors[k].values.resize(dimension);
      for (auto& v : vectors[k].values) v = reader.f32();
      if (kk != k || (k > 0 && (id != segment_id || rec_label != label || rec_user != user))) {
        throw Error(ErrorCode::CorruptStore, "records out of order");
      }
      segment_id = id;
      label = std::move(rec_label);
      user = std::move(rec_user);
    }
    store.index_segment(segment_id, texts, vectors, label, user, mode.value_or(TextMode::Template));
  }
  if (!reader.done()) throw Error(ErrorCode::CorruptStore, "trailing bytes");
  return store;
}

}  // namespace statrag
