#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "statrag/ingest.hpp"

namespace statrag {

/// The eight descriptors for one channel over one scope.
struct StatVector {
  double mean = 0.0;
  double max = 0.0;
  double min = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double stddev = 0.0;
  double median = 0.0;
  std::size_t n_peaks = 0;

  static constexpr std::size_t kSize = 8;
  static constexpr std::array<std::string_view, kSize> kNames = {
      "mean", "max", "min", "q1", "q3", "std", "median", "n_peaks"};

  std::array<double, kSize> as_array() const {
    return {mean, max, min, q1, q3, stddev, median, static_cast<double>(n_peaks)};
  }
  static StatVector from_array(std::span<const double> values);
};

struct ScopeFeatures {
  std::vector<double> values;  // 8 * m, channel-major, stat-minor
  std::string text;
};

struct FeatureBundle {
  std::int64_t segment_id = 0;
  std::array<ScopeFeatures, 4> scopes;  // indexed by Scope

  const ScopeFeatures& scope(Scope s) const { return scopes[static_cast<std::size_t>(s)]; }
  std::array<std::string, 4> texts() const;
};

/// Quantiles are type-7 (linear interpolation at (n - 1) p); std is the
/// population standard deviation.
StatVector compute_stats(std::span<const double> values);

/// Strict interior local maxima; endpoints and plateaus never count.
std::size_t count_peaks(std::span<const double> values);

/// Type-7 quantile of an ascending-sorted sequence.
double sorted_quantile(std::span<const double> sorted, double p);

FeatureBundle build_bundle(const PartitionedWindow& pw, std::span<const std::string> channel_names);

/// Renders one scope with the fixed template:
///   segment=<Scope>
///   <channel>: mean=<v>, max=<v>, ..., n_peaks=<v>
std::string serialize_scope(Scope scope, std::span<const std::string> channel_names,
                            std::span<const double> vector);

/// Formats a value with 6 significant digits, shortest form, '.' decimal point.
std::string format_value(double value);

struct ParsedScope {
  Scope scope = Scope::Full;
  std::vector<std::string> channel_names;
  std::vector<double> values;
};

/// Inverse of serialize_scope. Throws Error(LengthMismatch) on malformed text.
ParsedScope parse_scope(std::string_view text);

}  // namespace statrag
