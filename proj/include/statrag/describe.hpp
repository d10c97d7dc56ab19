#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "statrag/embed.hpp"
#include "statrag/ingest.hpp"
#include "statrag/llm.hpp"
#include "statrag/store.hpp"

namespace statrag {

struct ChannelConfig {
  std::string name;
  std::string placement;     // e.g. "right hip"
  std::string orientation;   // free-form note
  std::string axis_mapping;  // e.g. "x->forward"
};

struct SensorConfig {
  double sampling_rate_hz = 50.0;
  std::vector<ChannelConfig> channels;

  /// Placeholder placement/orientation for bare channel names.
  static SensorConfig from_names(std::span<const std::string> names, double sampling_rate_hz);
};

inline constexpr std::array<std::string_view, 4> kDescriptorSections = {"FULL", "START", "MID", "END"};
inline constexpr std::array<std::string_view, 4> kDescriptorFacets = {"dominant_axis", "smoothness",
                                                                      "intensity", "transitions"};
inline constexpr std::size_t kDefaultSampleBudget = 4000;

struct ActivityDescriptor {
  std::int64_t segment_id = 0;
  std::string full_analysis;
  std::array<std::string, 3> per_scope_analysis;  // Start, Mid, End

  /// The four sections, each prefixed with its "## <NAME>" header; these
  /// replace the template texts as embedded content.
  std::array<std::string, kSubsegments> section_texts() const;
};

/// Raw samples (4 decimals), sensor configuration and the required output
/// markup. Above `sample_budget` numbers the samples are stride-subsampled
/// and the prompt says so.
std::string build_descriptor_prompt(const SensorWindow& window, const SensorConfig& config,
                                    std::size_t sample_budget = kDefaultSampleBudget);

/// Validates markup: four "## " sections, each with all four facet lines.
/// Throws Error(MalformedDescriptor) otherwise.
ActivityDescriptor parse_descriptor(std::string_view response, std::int64_t segment_id);

/// Asks the client up to `max_attempts` times for a well-formed descriptor.
ActivityDescriptor generate_descriptor(LlmClient& client, std::string_view prompt,
                                       std::int64_t segment_id, int max_attempts = 2);

/// Describes, embeds and indexes each labelled window in descriptor mode.
void index_with_descriptors(VectorStore& store, std::span<const SensorWindow> windows,
                            LlmClient& describe_client, Embedder& embedder,
                            const SensorConfig& config,
                            std::size_t sample_budget = kDefaultSampleBudget);

}  // namespace statrag
