#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "statrag/llm.hpp"
#include "statrag/store.hpp"

namespace statrag {

struct PromptBundle {
  std::string system_text;
  std::string user_text;
  std::vector<std::string> label_set;
};

enum class ParseStatus : std::uint8_t { Exact, Fuzzy, Fallback };

std::string_view to_string(ParseStatus status);

struct Prediction {
  std::string label;
  std::string rationale;
  std::string raw_response;
  ParseStatus parse_status = ParseStatus::Fallback;

  bool operator==(const Prediction&) const = default;
};

struct ParsedLabel {
  std::string label;
  ParseStatus status = ParseStatus::Fallback;
};

/// Instruction used before any optimization.
std::string default_instruction();

/// Appends the admissible labels and the answer format to an instruction.
std::string render_system_text(std::string_view instruction, std::span<const std::string> label_set);

/// User prompt layout:
///   == LABELED SAMPLES ==
///   -- sample <rank> (score=<fused>) --
///   LABEL: <label>
///   <four scope texts>
///   ...
///   == CANDIDATE ==
///   <four scope texts>
PromptBundle build_prompt(std::string_view instruction, std::span<const RetrievalContext> contexts,
                          const std::array<std::string, kSubsegments>& candidate_texts,
                          std::vector<std::string> label_set);

Prediction llm_classify(LlmClient& client, const PromptBundle& prompt);

/// Exact: a line `label: <member>` (case-insensitive). Fuzzy: exactly one
/// member appears as a whole word. Otherwise the lexicographically smallest
/// member, flagged Fallback. Never throws for a non-empty label set.
ParsedLabel parse_prediction(std::string_view raw_response, std::span<const std::string> label_set);

struct LabeledSampleRef {
  std::string label;
  double fused_score = 0.0;
};

/// Reads back the labeled-sample headers of a user prompt.
std::vector<LabeledSampleRef> parse_labeled_samples(std::string_view user_text);

/// Modal label; ties by larger summed score, then smaller label.
std::string modal_label(std::span<const LabeledSampleRef> samples);

struct VoteResult {
  std::string label;
  bool abstain_fallback = false;  // nothing cleared the threshold
  std::size_t kept = 0;
};

/// Majority vote over contexts whose fused score is >= threshold.
VoteResult retrieve_only_classify(std::span<const RetrievalContext> contexts, double threshold);

}  // namespace statrag
