#include "statrag/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "statrag/error.hpp"

namespace statrag {

StatVector StatVector::from_array(std::span<const double> v) {
  if (v.size() != kSize) throw Error(ErrorCode::LengthMismatch, "stat vector needs 8 values");
  StatVector s;
  s.mean = v[0];
  s.max = v[1];
  s.min = v[2];
  s.q1 = v[3];
  s.q3 = v[4];
  s.stddev = v[5];
  s.median = v[6];
  s.n_peaks = static_cast<std::size_t>(std::llround(v[7]));
  return s;
}

std::array<std::string, 4> FeatureBundle::texts() const {
  return {scopes[0].text, scopes[1].text, scopes[2].text, scopes[3].text};
}

double sorted_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error(ErrorCode::EmptyInput, "quantile of empty sequence");
  const double pos = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::size_t count_peaks(std::span<const double> values) {
  std::size_t peaks = 0;
  for (std::size_t t = 1; t + 1 < values.size(); ++t) {
    if (values[t] > values[t - 1] && values[t] > values[t + 1]) ++peaks;
  }
  return peaks;
}

StatVector compute_stats(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "compute_stats needs at least one value");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());

  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);

  StatVector s;
  s.mean = mean;
  s.min = sorted.front();
  s.max = sorted.back();
  s.q1 = sorted_quantile(sorted, 0.25);
  s.median = sorted_quantile(sorted, 0.5);
  s.q3 = sorted_quantile(sorted, 0.75);
  s.stddev = std::sqrt(sq / n);
  s.n_peaks = count_peaks(values);
  return s;
}

std::string format_value(double value) {
  if (value == 0.0) return "0";  // folds -0
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 6);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, ptr);
}

std::string serialize_scope(Scope scope, std::span<const std::string> channel_names,
                            std::span<const double> vector) {
  if (channel_names.empty() || vector.size() != StatVector::kSize * channel_names.size()) {
    throw Error(ErrorCode::LengthMismatch,
                "vector of " + std::to_string(vector.size()) + " values for " +
                    std::to_string(channel_names.size()) + " channels");
  }
  std::string out = "segment=";
  out += scope_name(scope);
  out += '\n';
  for (std::size_t c = 0; c < channel_names.size(); ++c) {
    out += channel_names[c];
    out += ':';
    for (std::size_t i = 0; i < StatVector::kSize; ++i) {
      out += i == 0 ? " " : ", ";
      out += StatVector::kNames[i];
      out += '=';
      out += format_value(vector[c * StatVector::kSize + i]);
    }
    out += '\n';
  }
  return out;
}

FeatureBundle build_bundle(const PartitionedWindow& pw, std::span<const std::string> channel_names) {
  const std::size_t m = pw.window.samples.channel_count();
  if (channel_names.size() != m) {
    throw Error(ErrorCode::LengthMismatch, "channel name count does not match window channels");
  }
  FeatureBundle bundle;
  bundle.segment_id = pw.window.segment_id;
  for (Scope scope : kAllScopes) {
    auto& sf = bundle.scopes[static_cast<std::size_t>(scope)];
    sf.values.reserve(StatVector::kSize * m);
    for (std::size_t c = 0; c < m; ++c) {
      const auto stats = compute_stats(pw.view(c, scope)).as_array();
      sf.values.insert(sf.values.end(), stats.begin(), stats.end());
    }
    sf.text = serialize_scope(scope, channel_names, sf.values);
  }
  return bundle;
}

ParsedScope parse_scope(std::string_view text) {
  auto fail = [](const std::string& why) -> ParsedScope {
    throw Error(ErrorCode::LengthMismatch, "malformed scope text: " + why);
  };
  ParsedScope parsed;
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string_view {
    const std::size_t nl = text.find('\n', pos);
    const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
    std::string_view line = text.substr(pos, end - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    return line;
  };
  const std::string_view header = next_line();
  constexpr std::string_view kPrefix = "segment=";
  if (!header.starts_with(kPrefix)) return fail("missing segment header");
  const std::string_view name = header.substr(kPrefix.size());
  bool found = false;
  for (Scope s : kAllScopes) {
    if (scope_name(s) == name) {
      parsed.scope = s;
      found = true;
    }
  }
  if (!found) return fail("unknown scope '" + std::string(name) + "'");

  while (pos <= text.size()) {
    const std::string_view line = next_line();
    if (line.empty()) continue;
    const std::size_t colon = line.find(": ");
    if (colon == std::string_view::npos) return fail("missing channel separator");
    parsed.channel_names.emplace_back(line.substr(0, colon));
    std::string_view rest = line.substr(colon + 2);
    for (std::size_t i = 0; i < StatVector::kSize; ++i) {
      const std::string key = std::string(StatVector::kNames[i]) + "=";
      if (!rest.starts_with(key)) return fail("expected " + key);
      rest.remove_prefix(key.size());
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), value);
      if (ec != std::errc{}) return fail("bad number");
      parsed.values.push_back(value);
      rest.remove_prefix(static_cast<std::size_t>(ptr - rest.data()));
      if (i + 1 < StatVector::kSize) {
        if (!rest.starts_with(", ")) return fail("expected ', '");
        rest.remove_prefix(2);
      }
    }
    if (!rest.empty()) return fail("trailing characters");
  }
  if (parsed.channel_names.empty()) return fail("no channels");
  return parsed;
}

}  // namespace statrag
