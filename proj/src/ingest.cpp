#include "statrag/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include "statrag/error.hpp"
#include "statrag/random.hpp"

namespace statrag {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Minimal RFC 4180 field splitter: quoted fields may contain commas and "" escapes.
std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back(trim(current));
      current.clear();
    } else {
      current.push_back(ch);
    }
  }
  fields.emplace_back(trim(current));
  return fields;
}

std::optional<double> parse_finite(std::string_view cell) {
  cell = trim(cell);
  if (cell.empty()) return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

}  // namespace

void DatasetSchema::validate() const {
  if (channel_columns.empty()) throw Error(ErrorCode::InvalidSchema, "at least one channel column required");
  if (window_len < 4) throw Error(ErrorCode::InvalidSchema, "window length must be >= 4");
  if (step < 1 || step > window_len) throw Error(ErrorCode::InvalidSchema, "step must lie in [1, L]");
  if (!(sampling_rate_hz > 0.0)) throw Error(ErrorCode::InvalidSchema, "sampling rate must be positive");
}

std::string_view to_string(SourceRole role) {
  switch (role) {
    case SourceRole::Indexing: return "indexing";
    case SourceRole::Validation: return "validation";
    case SourceRole::Test: return "test";
  }
  return "unknown";
}

std::string_view scope_name(Scope scope) {
  switch (scope) {
    case Scope::Full: return "Full";
    case Scope::Start: return "Start";
    case Scope::Mid: return "Mid";
    case Scope::End: return "End";
  }
  return "?";
}

std::span<const double> PartitionedWindow::view(std::size_t channel, Scope scope) const {
  const auto& s = slice(scope);
  return std::span<const double>(window.samples.channels.at(channel)).subspan(s.begin, s.size());
}

std::vector<LabeledRun> parse_dataset(std::string_view csv_text, const DatasetSchema& schema) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= csv_text.size()) {
    const std::size_t nl = csv_text.find('\n', pos);
    const std::size_t end = nl == std::string_view::npos ? csv_text.size() : nl;
    std::string_view line = csv_text.substr(pos, end - pos);
    if (!trim(line).empty()) lines.push_back(line);
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  if (lines.empty()) throw Error(ErrorCode::EmptyFile, "no header row");

  const auto header = split_csv_line(lines.front());
  std::unordered_map<std::string, std::size_t> column_index;
  for (std::size_t i = 0; i < header.size(); ++i) column_index.emplace(header[i], i);
  auto require = [&](const std::string& name) {
    const auto it = column_index.find(name);
    if (it == column_index.end()) throw Error(ErrorCode::MissingColumn, "column '" + name + "'");
    return it->second;
  };
  std::vector<std::size_t> channel_idx;
  for (const auto& c : schema.channel_columns) channel_idx.push_back(require(c));
  const std::size_t label_idx = require(schema.label_column);
  const std::size_t subject_idx = require(schema.subject_column);
  if (lines.size() == 1) throw Error(ErrorCode::EmptyFile, "header present but no data rows");

  std::vector<LabeledRun> runs;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t row = li;
    const auto fields = split_csv_line(lines[li]);
    auto field = [&](std::size_t idx) -> const std::string& {
      if (idx >= fields.size()) {
        throw Error(ErrorCode::MissingColumn, "row " + std::to_string(row) + " has too few fields");
      }
      return fields[idx];
    };
    const std::string& subject = field(subject_idx);
    const std::string& label = field(label_idx);
    if (runs.empty() || runs.back().subject_id != subject || runs.back().label != label) {
      LabeledRun run;
      run.subject_id = subject;
      run.label = label;
      run.first_row = row;
      run.series.channels.resize(channel_idx.size());
      runs.push_back(std::move(run));
    }
    auto& run = runs.back();
    for (std::size_t c = 0; c < channel_idx.size(); ++c) {
      const std::string& cell = field(channel_idx[c]);
      const auto value = parse_finite(cell);
      if (!value) throw NonNumericValueError(row, schema.channel_columns[c], cell);
      run.series.channels[c].push_back(*value);
    }
  }
  return runs;
}

std::vector<LabeledRun> load_dataset(const std::filesystem::path& path, const DatasetSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_dataset(buffer.str(), schema);
}

NormalizationStats fit_normalization(std::span<const MultiSeries> series) {
  if (series.empty()) throw Error(ErrorCode::InsufficientData, "no series to fit");
  const std::size_t m = series.front().channel_count();
  NormalizationStats stats;
  stats.mean.assign(m, 0.0);
  stats.stddev.assign(m, 0.0);
  std::size_t n = 0;
  for (const auto& s : series) {
    if (s.channel_count() != m) throw Error(ErrorCode::ChannelCountMismatch, "inconsistent channel count");
    n += s.length();
  }
  if (n < 2) throw Error(ErrorCode::InsufficientData, "need at least 2 samples per channel");
  // Two-pass for accuracy.
  for (std::size_t c = 0; c < m; ++c) {
    double sum = 0.0;
    for (const auto& s : series) {
      for (double v : s.channels[c]) sum += v;
    }
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (const auto& s : series) {
      for (double v : s.channels[c]) sq += (v - mean) * (v - mean);
    }
    stats.mean[c] = mean;
    stats.stddev[c] = std::sqrt(sq / static_cast<double>(n));
  }
  return stats;
}

NormalizationStats fit_normalization(std::span<const SensorWindow> windows) {
  std::vector<MultiSeries> series;
  series.reserve(windows.size());
  for (const auto& w : windows) series.push_back(w.samples);
  return fit_normalization(std::span<const MultiSeries>(series));
}

void apply_zscore_inplace(MultiSeries& series, const NormalizationStats& stats) {
  if (series.channel_count() != stats.channel_count()) {
    throw Error(ErrorCode::ChannelCountMismatch,
                "series has " + std::to_string(series.channel_count()) + " channels, stats have " +
                    std::to_string(stats.channel_count()));
  }
  for (std::size_t c = 0; c < series.channel_count(); ++c) {
    const double scale = std::max(stats.stddev[c], kZscoreEpsilon);
    for (double& v : series.channels[c]) v = (v - stats.mean[c]) / scale;
  }
}

MultiSeries apply_zscore(const MultiSeries& series, const NormalizationStats& stats) {
  MultiSeries out = series;
  apply_zscore_inplace(out, stats);
  return out;
}

std::vector<SensorWindow> slide_windows(const MultiSeries& series, std::size_t window_len,
                                        std::size_t step, const std::string& subject_id,
                                        const std::optional<std::string>& label,
                                        std::int64_t first_segment_id, SourceRole role) {
  if (window_len == 0 || step == 0) throw Error(ErrorCode::InvalidSchema, "L and D must be positive");
  const std::size_t len = series.length();
  if (len < window_len) {
    throw Error(ErrorCode::SeriesTooShort,
                "series length " + std::to_string(len) + " < L=" + std::to_string(window_len));
  }
  const std::size_t count = (len - window_len) / step + 1;
  std::vector<SensorWindow> windows;
  windows.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t offset = w * step;
    SensorWindow window;
    window.segment_id = first_segment_id + static_cast<std::int64_t>(w);
    window.subject_id = subject_id;
    window.label = label;
    window.source_role = role;
    window.samples.channels.reserve(series.channel_count());
    for (const auto& ch : series.channels) {
      const auto first = ch.begin() + static_cast<std::ptrdiff_t>(offset);
      window.samples.channels.emplace_back(first, first + static_cast<std::ptrdiff_t>(window_len));
    }
    windows.push_back(std::move(window));
  }
  return windows;
}

std::vector<SensorWindow> window_runs(std::span<const LabeledRun> runs, const DatasetSchema& schema,
                                      std::int64_t first_segment_id, SourceRole role) {
  std::vector<SensorWindow> out;
  std::int64_t next_id = first_segment_id;
  for (const auto& run : runs) {
    if (run.series.length() < schema.window_len) continue;
    auto windows = slide_windows(run.series, schema.window_len, schema.step, run.subject_id,
                                 run.label, next_id, role);
    next_id += static_cast<std::int64_t>(windows.size());
    std::move(windows.begin(), windows.end(), std::back_inserter(out));
  }
  return out;
}

PartitionedWindow partition_window(const SensorWindow& window) {
  const std::size_t len = window.length();
  if (len < 4) {
    throw Error(ErrorCode::WindowTooShort, "window length " + std::to_string(len) + " < 4");
  }
  const std::size_t b1 = len / 3;
  const std::size_t b2 = (2 * len) / 3;
  PartitionedWindow pw;
  pw.window = window;
  pw.scopes = {ScopeSlice{0, len}, ScopeSlice{0, b1}, ScopeSlice{b1, b2}, ScopeSlice{b2, len}};
  return pw;
}

std::string synth_label(std::size_t class_index) {
  return "activity_" + std::to_string(class_index);
}

std::vector<std::string> synth_channel_names(std::size_t channels) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < channels; ++c) names.push_back("ch" + std::to_string(c));
  return names;
}

std::vector<SensorWindow> synth_dataset(std::size_t n_classes, std::size_t windows_per_class,
                                        std::size_t channels, std::size_t window_len,
                                        std::uint64_t seed) {
  constexpr double kNoise = 0.02;
  constexpr double kPhaseJitter = 0.25;  // radians
  constexpr std::size_t kSubjects = 5;
  Rng rng(seed);
  std::vector<SensorWindow> out;
  out.reserve(n_classes * windows_per_class);
  const double two_pi = 2.0 * std::numbers::pi;
  std::int64_t segment = 0;
  for (std::size_t cls = 0; cls < n_classes; ++cls) {
    const double amplitude = static_cast<double>(cls + 1);
    const double freq = static_cast<double>(cls + 1) / static_cast<double>(window_len);
    for (std::size_t w = 0; w < windows_per_class; ++w) {
      SensorWindow window;
      window.segment_id = segment++;
      window.subject_id = "subject_" + std::to_string(w % kSubjects);
      window.label = synth_label(cls);
      window.samples.channels.resize(channels);
      const double jitter = (2.0 * uniform01(rng) - 1.0) * kPhaseJitter;
      for (std::size_t c = 0; c < channels; ++c) {
        const double phase = jitter + std::numbers::pi * static_cast<double>(c) / static_cast<double>(channels);
        auto& ch = window.samples.channels[c];
        ch.resize(window_len);
        for (std::size_t t = 0; t < window_len; ++t) {
          const double noise = (2.0 * uniform01(rng) - 1.0) * kNoise;
          ch[t] = amplitude * std::sin(two_pi * freq * static_cast<double>(t) + phase) + noise;
        }
      }
      out.push_back(std::move(window));
    }
  }
  return out;
}

}  // namespace statrag
