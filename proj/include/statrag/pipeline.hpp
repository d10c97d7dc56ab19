#pragma once

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "statrag/classify.hpp"
#include "statrag/describe.hpp"
#include "statrag/embed.hpp"
#include "statrag/ingest.hpp"
#include "statrag/llm.hpp"
#include "statrag/store.hpp"

namespace statrag {

struct PipelineOptions {
  RetrievalWeights weights;
  std::size_t q = 10;
  std::size_t p = 30;  // per sub-segment ANN depth
  MissingScorePolicy missing_scores = MissingScorePolicy::ZeroFill;
  double threshold = 0.75;  // retrieval-only baseline
  std::string instruction = default_instruction();
  TextMode text_mode = TextMode::Template;
  std::size_t sample_budget = kDefaultSampleBudget;
  std::size_t jobs = 1;

  void validate() const;
};

struct ClassifiedWindow {
  std::int64_t segment_id = 0;
  Prediction prediction;
  std::vector<RetrievalContext> contexts;
};

/// Window -> features (or descriptors) -> embeddings -> retrieval -> prompt
/// -> LLM. Indexing mutates the owned store; everything else is const and
/// safe to call concurrently.
class Pipeline {
 public:
  Pipeline(std::vector<std::string> channel_names, std::shared_ptr<Embedder> embedder,
           std::shared_ptr<LlmClient> classifier, PipelineOptions options = {});

  const PipelineOptions& options() const { return options_; }
  const std::vector<std::string>& channel_names() const { return channel_names_; }

  /// Descriptor mode needs a client that writes the window descriptors.
  void set_describer(std::shared_ptr<LlmClient> describer, SensorConfig config);

  /// Fits z-score statistics; windows given to index/classify are then normalized with them.
  void fit_normalization(std::span<const SensorWindow> indexing_windows);
  void set_normalization(std::optional<NormalizationStats> stats) { normalization_ = std::move(stats); }
  const std::optional<NormalizationStats>& normalization() const { return normalization_; }

  void set_store(std::shared_ptr<VectorStore> store);
  const VectorStore& store() const { return *store_; }
  std::shared_ptr<VectorStore> shared_store() const { return store_; }

  /// Labels of the indexed segments, sorted.
  std::vector<std::string> label_set() const { return store_->labels(); }

  SensorWindow normalized(const SensorWindow& window) const;

  /// The four texts that represent a window (template or descriptor).
  std::array<std::string, kSubsegments> scope_texts(const SensorWindow& window) const;

  void index(std::span<const SensorWindow> windows);

  std::vector<RetrievalContext> retrieve(const SensorWindow& window) const;

  /// Candidate texts and retrieved contexts for one window.
  std::pair<std::array<std::string, kSubsegments>, std::vector<RetrievalContext>> prepare(
      const SensorWindow& window) const;

  ClassifiedWindow classify(const SensorWindow& window) const;
  ClassifiedWindow classify(const SensorWindow& window, std::span<const std::string> label_set,
                            std::string_view instruction) const;

  /// Classification from already-prepared evidence.
  Prediction classify_prepared(const std::array<std::string, kSubsegments>& candidate_texts,
                               std::span<const RetrievalContext> contexts,
                               std::span<const std::string> label_set,
                               std::string_view instruction) const;

  LlmClient& classifier() const { return *classifier_; }
  Embedder& embedder() const { return *embedder_; }

 private:
  std::vector<std::string> channel_names_;
  std::shared_ptr<Embedder> embedder_;
  std::shared_ptr<LlmClient> classifier_;
  std::shared_ptr<LlmClient> describer_;
  SensorConfig sensor_config_;
  PipelineOptions options_;
  std::optional<NormalizationStats> normalization_;
  std::shared_ptr<VectorStore> store_;
};

}  // namespace statrag
