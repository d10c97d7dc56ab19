#include "statrag/describe.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numeric>

#include "statrag/error.hpp"
#include "statrag/features.hpp"

namespace statrag {

namespace {

constexpr std::string_view kRawBegin = "== RAW SAMPLES ==";
constexpr std::string_view kRawEnd = "== END RAW SAMPLES ==";

std::string fixed4(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 4);
  std::string s(buf, ptr);
  if (s == "-0.0000") s = "0.0000";
  return s;
}

std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

std::string upper(std::string_view s) {
  std::string out;
  for (char c : s) out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return out;
}

std::string lower(std::string_view s) {
  std::string out;
  for (char c : s) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto end = nl == std::string_view::npos ? text.size() : nl;
    out.push_back(text.substr(pos, end - pos));
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return out;
}

struct SectionFacets {
  std::string dominant;
  double dominant_variance = 0.0;
  double smoothness = 0.0;
  std::vector<double> rms;
  std::size_t transitions = 0;
};

SectionFacets facets_of(const std::vector<std::string>& names,
                        const std::vector<std::vector<double>>& channels, std::size_t begin,
                        std::size_t end) {
  SectionFacets f;
  double best_var = -1.0;
  double second_diff = 0.0;
  std::size_t second_diff_n = 0;
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const std::span<const double> x(channels[c].data() + begin, end - begin);
    const double n = static_cast<double>(x.size());
    const double mean = x.empty() ? 0.0 : std::accumulate(x.begin(), x.end(), 0.0) / n;
    double var = 0.0, sq = 0.0;
    for (double v : x) {
      var += (v - mean) * (v - mean);
      sq += v * v;
    }
    var = x.empty() ? 0.0 : var / n;
    f.rms.push_back(x.empty() ? 0.0 : std::sqrt(sq / n));
    if (var > best_var) {
      best_var = var;
      f.dominant = names[c];
    }
    for (std::size_t t = 1; t + 1 < x.size(); ++t) {
      second_diff += std::abs(x[t + 1] - 2.0 * x[t] + x[t - 1]);
      ++second_diff_n;
    }
    for (std::size_t t = 1; t < x.size(); ++t) {
      if ((x[t - 1] - mean) * (x[t] - mean) < 0.0) ++f.transitions;
    }
  }
  f.dominant_variance = std::max(best_var, 0.0);
  f.smoothness = second_diff_n ? second_diff / static_cast<double>(second_diff_n) : 0.0;
  return f;
}

}  // namespace

SensorConfig SensorConfig::from_names(std::span<const std::string> names, double sampling_rate_hz) {
  SensorConfig cfg;
  cfg.sampling_rate_hz = sampling_rate_hz;
  for (const auto& n : names) cfg.channels.push_back({n, "unspecified", "unspecified", n});
  return cfg;
}

std::array<std::string, kSubsegments> ActivityDescriptor::section_texts() const {
  return {"## FULL\n" + full_analysis, "## START\n" + per_scope_analysis[0],
          "## MID\n" + per_scope_analysis[1], "## END\n" + per_scope_analysis[2]};
}

std::string build_descriptor_prompt(const SensorWindow& window, const SensorConfig& config,
                                    std::size_t sample_budget) {
  const std::size_t m = window.samples.channel_count();
  if (config.channels.size() != m) {
    throw Error(ErrorCode::ConfigMismatch, "sensor config has " + std::to_string(config.channels.size()) +
                                               " channels, window has " + std::to_string(m));
  }
  if (!(config.sampling_rate_hz > 0.0)) throw Error(ErrorCode::ConfigMismatch, "sampling rate must be positive");
  const std::size_t len = window.length();
  const std::size_t total = len * m;
  const std::size_t budget = std::max<std::size_t>(sample_budget, m);
  const std::size_t stride = total > budget ? (total + budget - 1) / budget : 1;

  std::string p;
  p += "Describe the motion captured in one window of wearable sensor data. Analyse the full "
       "window and then its start, mid and end thirds.\n";
  p += "== SENSOR CONFIGURATION ==\n";
  p += "sampling_rate_hz: " + format_value(config.sampling_rate_hz) + "\n";
  for (const auto& ch : config.channels) {
    p += "channel " + ch.name + ": placement=" + ch.placement + "; orientation=" + ch.orientation +
         "; axis=" + ch.axis_mapping + "\n";
  }
  p += kRawBegin;
  p += '\n';
  p += "samples_per_channel: " + std::to_string(len);
  if (stride > 1) {
    p += " (subsampled with stride " + std::to_string(stride) + " to fit the context budget)";
  }
  p += '\n';
  for (std::size_t c = 0; c < m; ++c) {
    p += config.channels[c].name + ":";
    for (std::size_t t = 0; t < len; t += stride) {
      p += t == 0 ? " " : ", ";
      p += fixed4(window.samples.channels[c][t]);
    }
    p += '\n';
  }
  p += kRawEnd;
  p += '\n';
  p += "== OUTPUT FORMAT ==\n"
       "Write exactly four sections headed `## FULL`, `## START`, `## MID` and `## END`. In every "
       "section write one line each beginning with `dominant_axis:`, `smoothness:`, `intensity:` "
       "and `transitions:` describing the dominant axis of motion, how smooth the motion is, its "
       "intensity and any transitions.\n";
  return p;
}

ActivityDescriptor parse_descriptor(std::string_view response, std::int64_t segment_id) {
  std::array<std::string, 4> bodies;
  std::array<bool, 4> seen{};
  int current = -1;
  for (auto line : lines_of(response)) {
    const auto t = trim(line);
    if (t.starts_with("##")) {
      const std::string name = upper(trim(t.substr(2)));
      current = -1;
      for (std::size_t s = 0; s < kDescriptorSections.size(); ++s) {
        if (name == kDescriptorSections[s]) current = static_cast<int>(s);
      }
      if (current >= 0) {
        if (seen[static_cast<std::size_t>(current)]) {
          throw Error(ErrorCode::MalformedDescriptor, "duplicate section " + name);
        }
        seen[static_cast<std::size_t>(current)] = true;
      }
      continue;
    }
    if (current < 0 || t.empty()) continue;
    auto& body = bodies[static_cast<std::size_t>(current)];
    body.append(t);
    body.push_back('\n');
  }
  for (std::size_t s = 0; s < 4; ++s) {
    if (!seen[s] || bodies[s].empty()) {
      throw Error(ErrorCode::MalformedDescriptor, "missing section " + std::string(kDescriptorSections[s]));
    }
    for (auto facet : kDescriptorFacets) {
      bool found = false;
      for (auto line : lines_of(bodies[s])) {
        if (lower(line).starts_with(std::string(facet) + ":")) found = true;
      }
      if (!found) {
        throw Error(ErrorCode::MalformedDescriptor, "section " + std::string(kDescriptorSections[s]) +
                                                        " lacks " + std::string(facet));
      }
    }
  }
  ActivityDescriptor d;
  d.segment_id = segment_id;
  d.full_analysis = std::move(bodies[0]);
  d.per_scope_analysis = {std::move(bodies[1]), std::move(bodies[2]), std::move(bodies[3])};
  return d;
}

ActivityDescriptor generate_descriptor(LlmClient& client, std::string_view prompt, std::int64_t segment_id,
                                       int max_attempts) {
  constexpr std::string_view kSystem =
      "You are an expert in wearable motion analysis. Follow the requested output format exactly.";
  std::string last_error = "no attempts";
  for (int attempt = 0; attempt < std::max(1, max_attempts); ++attempt) {
    const std::string reply = client.complete(kSystem, prompt);
    try {
      return parse_descriptor(reply, segment_id);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MalformedDescriptor) throw;
      last_error = e.what();
    }
  }
  throw Error(ErrorCode::MalformedDescriptor,
              "segment " + std::to_string(segment_id) + " after " + std::to_string(max_attempts) +
                  " attempts: " + last_error);
}

void index_with_descriptors(VectorStore& store, std::span<const SensorWindow> windows,
                            LlmClient& describe_client, Embedder& embedder, const SensorConfig& config,
                            std::size_t sample_budget) {
  if (store.mode() && *store.mode() != TextMode::Descriptor) {
    throw Error(ErrorCode::ModeMismatch, "store already holds template-mode records");
  }
  for (const auto& w : windows) {
    if (!w.label) throw Error(ErrorCode::ConfigInvalid, "indexing window without label");
    const auto prompt = build_descriptor_prompt(w, config, sample_budget);
    const auto descriptor = generate_descriptor(describe_client, prompt, w.segment_id);
    const auto texts = descriptor.section_texts();
    const auto vectors = embedder.embed(texts);
    store.index_segment(w.segment_id, texts, vectors, *w.label, w.subject_id, TextMode::Descriptor);
  }
}

std::string MockDescriptorClient::complete(std::string_view system, std::string_view user) {
  std::vector<std::string> names;
  std::vector<std::vector<double>> channels;
  bool in_raw = false;
  for (auto line : lines_of(user)) {
    if (line == kRawBegin) {
      in_raw = true;
      continue;
    }
    if (line == kRawEnd) break;
    if (!in_raw || line.starts_with("samples_per_channel:")) continue;
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) continue;
    names.emplace_back(line.substr(0, colon));
    auto& values = channels.emplace_back();
    std::string_view rest = line.substr(colon + 1);
    while (!rest.empty()) {
      rest = trim(rest);
      if (!rest.empty() && rest.front() == ',') rest.remove_prefix(1);
      rest = trim(rest);
      if (rest.empty()) break;
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), v);
      if (ec != std::errc{}) break;
      values.push_back(v);
      rest.remove_prefix(static_cast<std::size_t>(ptr - rest.data()));
    }
  }
  std::string reply;
  if (channels.empty() || channels.front().empty()) {
    reply = "No samples found.";
  } else {
    const std::size_t len = channels.front().size();
    const std::array<std::pair<std::size_t, std::size_t>, 4> ranges = {
        std::pair{std::size_t{0}, len}, std::pair{std::size_t{0}, len / 3},
        std::pair{len / 3, 2 * len / 3}, std::pair{2 * len / 3, len}};
    for (std::size_t s = 0; s < 4; ++s) {
      const auto f = facets_of(names, channels, ranges[s].first, ranges[s].second);
      reply += "## " + std::string(kDescriptorSections[s]) + "\n";
      reply += "dominant_axis: " + f.dominant + " with variance " + format_value(f.dominant_variance) + "\n";
      reply += "smoothness: mean absolute second difference " + format_value(f.smoothness) + "\n";
      reply += "intensity: rms";
      for (std::size_t c = 0; c < names.size(); ++c) {
        reply += (c == 0 ? " " : ", ") + names[c] + " " + format_value(f.rms[c]);
      }
      reply += "\ntransitions: " + std::to_string(f.transitions) + " mean crossings\n";
    }
  }
  if (usage_) {
    usage_->record({RequestKind::Chat, provider_id(), true, system.size() + user.size(), reply.size(),
                    "describe"});
  }
  return reply;
}

}  // namespace statrag
