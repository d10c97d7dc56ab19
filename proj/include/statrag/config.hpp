#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "statrag/describe.hpp"
#include "statrag/embed.hpp"
#include "statrag/eval.hpp"
#include "statrag/ingest.hpp"
#include "statrag/llm.hpp"
#include "statrag/openset.hpp"
#include "statrag/optimize.hpp"
#include "statrag/pipeline.hpp"

namespace statrag {

/// Where windows come from: CSV files or the built-in synthetic generator.
struct DatasetConfig {
  enum class Source : std::uint8_t { Csv, Synthetic };
  Source source = Source::Synthetic;

  DatasetSchema schema;
  std::filesystem::path indexing_path;
  std::optional<std::filesystem::path> validation_path;
  std::optional<std::filesystem::path> test_path;

  // synthetic: class c, window i gets segment id c * per_class + i;
  // id % 5 == 4 goes to test, id % 5 == 3 to validation when enabled.
  std::size_t synth_classes = 3;
  std::size_t synth_windows_per_class = 200;
  std::size_t synth_channels = 6;
  std::size_t synth_window_len = 40;
  std::uint64_t synth_seed = 42;
  bool synth_validation = false;
};

struct OpenSetConfig {
  double openness = 0.3;
  LabelMode mode = LabelMode::TrueLabelHidden;
  bool include_placeholder = true;
  double test_fraction = 0.3;
  double validation_fraction = 0.0;
  bool generate_labels = false;
  LlmClientConfig label_llm;  // used when generate_labels is set
};

/// Everything a subcommand needs. Loaded from one JSON file; every key is
/// optional and unknown keys are an error.
struct EngineConfig {
  DatasetConfig dataset;
  bool normalize = true;  // z-score fitted on the indexing windows
  PipelineOptions pipeline;
  ProviderConfig embedding;
  LlmClientConfig llm;
  LlmClientConfig optimizer_llm;
  LlmClientConfig describer_llm;
  OptimizerConfig optimizer;
  OpenSetConfig openset;
  std::vector<ChannelConfig> channels;  // descriptor prompts; defaults to bare names
  std::optional<CostRates> rates;
  std::uint64_t seed = 0;

  EngineConfig();

  /// Throws ConfigInvalid (or the component's own code) on any violated invariant.
  void validate() const;

  std::vector<std::string> channel_names() const;
  SensorConfig sensor_config() const;

  /// Propagates the global seed into the component configs.
  void apply_seed(std::uint64_t s);
};

EngineConfig parse_engine_config(const nlohmann::json& j);
EngineConfig load_engine_config(const std::filesystem::path& path);

/// The effective configuration, including defaults.
nlohmann::json engine_config_to_json(const EngineConfig& config);

struct DatasetSplits {
  std::vector<SensorWindow> indexing, validation, test;
};

DatasetSplits load_splits(const DatasetConfig& config);

// Normalization sidecar written next to a store.
void save_normalization(const NormalizationStats& stats, const std::filesystem::path& path);
NormalizationStats load_normalization(const std::filesystem::path& path);

// Request log persistence, one JSON object per line.
nlohmann::json usage_to_json(const UsageRecord& r);
UsageRecord usage_from_json(const nlohmann::json& j);
void save_usage(std::span<const UsageRecord> log, const std::filesystem::path& path);
std::vector<UsageRecord> load_usage(const std::filesystem::path& path);

/// Writes windows as a CSV the ingest module reads back: one run per window.
void write_windows_csv(std::span<const SensorWindow> windows, std::span<const std::string> channel_names,
                       const std::filesystem::path& path);

}  // namespace statrag
