#include "statrag/pipeline.hpp"

#include "statrag/error.hpp"
#include "statrag/features.hpp"
#include "statrag/parallel.hpp"

namespace statrag {

void PipelineOptions::validate() const {
  weights.validate();
  if (q < 1) throw Error(ErrorCode::ConfigInvalid, "q must be >= 1");
  if (p < 1) throw Error(ErrorCode::ConfigInvalid, "p must be >= 1");
  if (!(threshold >= -1.0 && threshold <= 1.0)) {
    throw Error(ErrorCode::ConfigInvalid, "threshold must lie in [-1, 1]");
  }
  if (jobs < 1) throw Error(ErrorCode::ConfigInvalid, "jobs must be >= 1");
}

Pipeline::Pipeline(std::vector<std::string> channel_names, std::shared_ptr<Embedder> embedder,
                   std::shared_ptr<LlmClient> classifier, PipelineOptions options)
    : channel_names_(std::move(channel_names)),
      embedder_(std::move(embedder)),
      classifier_(std::move(classifier)),
      options_(std::move(options)) {
  options_.validate();
  if (channel_names_.empty()) throw Error(ErrorCode::ConfigInvalid, "pipeline needs channel names");
  if (!embedder_) throw Error(ErrorCode::ConfigInvalid, "pipeline needs an embedder");
  store_ = std::make_shared<VectorStore>(embedder_->dimension());
  sensor_config_ = SensorConfig::from_names(channel_names_, 50.0);
}

void Pipeline::set_describer(std::shared_ptr<LlmClient> describer, SensorConfig config) {
  describer_ = std::move(describer);
  sensor_config_ = std::move(config);
}

void Pipeline::fit_normalization(std::span<const SensorWindow> indexing_windows) {
  normalization_ = statrag::fit_normalization(indexing_windows);
}

void Pipeline::set_store(std::shared_ptr<VectorStore> store) {
  if (!store) throw Error(ErrorCode::ConfigInvalid, "null store");
  if (store->dimension() != embedder_->dimension()) {
    throw Error(ErrorCode::DimensionMismatch, "store d=" + std::to_string(store->dimension()) +
                                                  ", embedder d=" + std::to_string(embedder_->dimension()));
  }
  store_ = std::move(store);
}

SensorWindow Pipeline::normalized(const SensorWindow& window) const {
  if (!normalization_) return window;
  SensorWindow out = window;
  apply_zscore_inplace(out.samples, *normalization_);
  return out;
}

std::array<std::string, kSubsegments> Pipeline::scope_texts(const SensorWindow& window) const {
  const SensorWindow w = normalized(window);
  if (options_.text_mode == TextMode::Descriptor) {
    if (!describer_) throw Error(ErrorCode::ConfigInvalid, "descriptor mode without a describer client");
    const auto prompt = build_descriptor_prompt(w, sensor_config_, options_.sample_budget);
    return generate_descriptor(*describer_, prompt, w.segment_id).section_texts();
  }
  return build_bundle(partition_window(w), channel_names_).texts();
}

void Pipeline::index(std::span<const SensorWindow> windows) {
  for (const auto& w : windows) {
    if (!w.label) throw Error(ErrorCode::ConfigInvalid, "indexing window without a label");
    if (store_->contains(w.segment_id)) {
      throw Error(ErrorCode::DuplicateSegment, "segment " + std::to_string(w.segment_id) + " already indexed");
    }
  }
  const auto texts = parallel_map(windows.size(), options_.jobs,
                                  [&](std::size_t i) { return scope_texts(windows[i]); });
  std::vector<std::string> flat;
  flat.reserve(texts.size() * kSubsegments);
  for (const auto& t : texts) flat.insert(flat.end(), t.begin(), t.end());
  const auto vectors = embedder_->embed(flat);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const std::span<const EmbeddingVector> four(vectors.data() + i * kSubsegments, kSubsegments);
    store_->index_segment(windows[i].segment_id, texts[i], four, *windows[i].label, windows[i].subject_id,
                          options_.text_mode);
  }
}

std::pair<std::array<std::string, kSubsegments>, std::vector<RetrievalContext>> Pipeline::prepare(
    const SensorWindow& window) const {
  auto texts = scope_texts(window);
  const auto vectors = embedder_->embed(texts);
  std::array<EmbeddingVector, kSubsegments> queries;
  std::copy(vectors.begin(), vectors.end(), queries.begin());
  auto contexts = store_->retrieve(queries, options_.weights, options_.p, options_.q, options_.missing_scores);
  return {std::move(texts), std::move(contexts)};
}

std::vector<RetrievalContext> Pipeline::retrieve(const SensorWindow& window) const {
  return prepare(window).second;
}

Prediction Pipeline::classify_prepared(const std::array<std::string, kSubsegments>& candidate_texts,
                                       std::span<const RetrievalContext> contexts,
                                       std::span<const std::string> label_set,
                                       std::string_view instruction) const {
  if (!classifier_) throw Error(ErrorCode::ConfigInvalid, "pipeline has no classifier client");
  const auto prompt = build_prompt(instruction, contexts, candidate_texts,
                                   std::vector<std::string>(label_set.begin(), label_set.end()));
  return llm_classify(*classifier_, prompt);
}

ClassifiedWindow Pipeline::classify(const SensorWindow& window, std::span<const std::string> label_set,
                                    std::string_view instruction) const {
  auto [texts, contexts] = prepare(window);
  ClassifiedWindow out;
  out.segment_id = window.segment_id;
  out.prediction = classify_prepared(texts, contexts, label_set, instruction);
  out.contexts = std::move(contexts);
  return out;
}

ClassifiedWindow Pipeline::classify(const SensorWindow& window) const {
  const auto labels = label_set();
  return classify(window, labels, options_.instruction);
}

}  // namespace statrag
