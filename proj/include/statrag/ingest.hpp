#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace statrag {

/// Column layout and windowing parameters for a CSV dataset.
struct DatasetSchema {
  std::vector<std::string> channel_columns;
  std::string label_column = "label";
  std::string subject_column = "subject";
  double sampling_rate_hz = 50.0;
  std::size_t window_len = 40;  // L, in samples
  std::size_t step = 20;        // D, in samples

  /// Throws Error(InvalidSchema) when m < 1, L < 4, D outside [1, L] or rate <= 0.
  void validate() const;
};

/// Channel-major multi-channel series: channels[c][t].
struct MultiSeries {
  std::vector<std::vector<double>> channels;

  std::size_t channel_count() const { return channels.size(); }
  std::size_t length() const { return channels.empty() ? 0 : channels.front().size(); }

  bool operator==(const MultiSeries&) const = default;
};

/// One contiguous (subject, label) run from a dataset file.
struct LabeledRun {
  std::string subject_id;
  std::string label;
  MultiSeries series;
  std::size_t first_row = 0;  // 1-based data row of the first sample
};

enum class SourceRole : std::uint8_t { Indexing, Validation, Test };

std::string_view to_string(SourceRole role);

struct SensorWindow {
  std::int64_t segment_id = 0;
  std::string subject_id;
  std::optional<std::string> label;
  MultiSeries samples;
  SourceRole source_role = SourceRole::Indexing;

  std::size_t length() const { return samples.length(); }

  bool operator==(const SensorWindow&) const = default;
};

enum class Scope : std::uint8_t { Full = 0, Start = 1, Mid = 2, End = 3 };

inline constexpr std::array<Scope, 4> kAllScopes = {Scope::Full, Scope::Start, Scope::Mid,
                                                    Scope::End};

std::string_view scope_name(Scope scope);

/// Half-open sample range [begin, end).
struct ScopeSlice {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const ScopeSlice&) const = default;
};

struct PartitionedWindow {
  SensorWindow window;
  std::array<ScopeSlice, 4> scopes;  // indexed by Scope

  const ScopeSlice& slice(Scope scope) const { return scopes[static_cast<std::size_t>(scope)]; }
  std::span<const double> view(std::size_t channel, Scope scope) const;
};

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population standard deviation

  std::size_t channel_count() const { return mean.size(); }
};

inline constexpr double kZscoreEpsilon = 1e-8;

/// Reads a CSV with a header row and splits it into contiguous
/// (subject, label) runs in file order.
std::vector<LabeledRun> load_dataset(const std::filesystem::path& path,
                                     const DatasetSchema& schema);

/// Same as load_dataset, but over CSV text already in memory.
std::vector<LabeledRun> parse_dataset(std::string_view csv_text, const DatasetSchema& schema);

/// Per-channel mean and population std over every sample of every series.
NormalizationStats fit_normalization(std::span<const MultiSeries> series);
NormalizationStats fit_normalization(std::span<const SensorWindow> windows);

MultiSeries apply_zscore(const MultiSeries& series, const NormalizationStats& stats);
void apply_zscore_inplace(MultiSeries& series, const NormalizationStats& stats);

/// Windows start at 0, D, 2D, ...; a trailing partial window is dropped.
/// Segment ids are assigned first_segment_id, first_segment_id + 1, ...
std::vector<SensorWindow> slide_windows(const MultiSeries& series, std::size_t window_len,
                                        std::size_t step, const std::string& subject_id,
                                        const std::optional<std::string>& label,
                                        std::int64_t first_segment_id = 0,
                                        SourceRole role = SourceRole::Indexing);

/// Runs slide_windows over every run, skipping runs shorter than L.
std::vector<SensorWindow> window_runs(std::span<const LabeledRun> runs, const DatasetSchema& schema,
                                      std::int64_t first_segment_id = 0,
                                      SourceRole role = SourceRole::Indexing);

/// Full = [0, L); Start/Mid/End split at floor(L/3) and floor(2L/3).
PartitionedWindow partition_window(const SensorWindow& window);

/// Deterministic labelled sinusoid fixture. Class c has amplitude c + 1 and
/// frequency (c + 1) / L cycles per sample, plus small seeded noise.
std::vector<SensorWindow> synth_dataset(std::size_t n_classes, std::size_t windows_per_class,
                                        std::size_t channels, std::size_t window_len,
                                        std::uint64_t seed);

/// Channel names used by synth_dataset: ch0, ch1, ...
std::vector<std::string> synth_channel_names(std::size_t channels);

std::string synth_label(std::size_t class_index);

}  // namespace statrag
