#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "statrag/eval.hpp"
#include "statrag/pipeline.hpp"

namespace statrag {

inline constexpr std::string_view kUnseenPlaceholder = "unseen_activity";

struct OpenSetSplit {
  std::set<std::string> known_classes;
  std::set<std::string> withheld_classes;
  double openness = 0.0;
  std::vector<std::int64_t> indexing_ids;
  std::vector<std::int64_t> validation_ids;
  std::vector<std::int64_t> test_ids;

  bool is_withheld(const std::string& label) const { return withheld_classes.contains(label); }
};

enum class LabelMode : std::uint8_t { TrueLabelAvailable, TrueLabelHidden };

std::string_view to_string(LabelMode mode);
LabelMode label_mode_from_string(std::string_view name);

struct LabelSpaceMode {
  LabelMode mode = LabelMode::TrueLabelHidden;
  std::string placeholder = std::string(kUnseenPlaceholder);
};

/// round-half-up(openness * classes), at least 1 and at most classes - 1.
std::size_t withheld_count(std::size_t classes, double openness);

struct SplitFractions {
  double validation = 0.0;  // of each known class
  double test = 0.3;        // of each known class
};

/// Withheld classes are drawn with the seeded rng. Every withheld window goes
/// to test; known windows are split per class into indexing/validation/test.
OpenSetSplit make_openset_split(std::span<const SensorWindow> windows, double openness, std::uint64_t seed,
                                SplitFractions fractions = {});

/// Indexing = every window of the other classes, test = every window of `cls`.
OpenSetSplit leave_one_class_out(std::span<const SensorWindow> windows, const std::string& cls);

/// Windows whose ids are listed, in the order of `ids`.
std::vector<SensorWindow> select_windows(std::span<const SensorWindow> windows,
                                         std::span<const std::int64_t> ids);

/// Hidden: known + placeholder. Available: known + withheld. Sorted.
std::vector<std::string> openset_label_set(const OpenSetSplit& split, const LabelSpaceMode& mode);

/// Ground truth as scored: withheld labels become the placeholder in Hidden mode.
std::string openset_truth(const std::string& label, const OpenSetSplit& split, const LabelSpaceMode& mode);

Prediction openset_classify(const Pipeline& pipeline, const OpenSetSplit& split, const LabelSpaceMode& mode,
                            const SensorWindow& window);

/// True if `name` occurs in `text` delimited by characters outside [A-Za-z0-9_].
bool contains_token(std::string_view text, std::string_view name);

/// First line, text after the last ':', punctuation stripped (inner '-' and
/// '_' kept), lowercased, whitespace collapsed, at most four words.
std::string normalize_generated_label(std::string_view reply);

/// Asks for a short activity name for the candidate. Two attempts; throws
/// Error(EmptyLabel) if both normalize to nothing.
std::string generate_unseen_label(LlmClient& client, std::span<const RetrievalContext> contexts,
                                  const std::array<std::string, kSubsegments>& candidate_texts);

struct SemanticMatch {
  std::string cls;
  double similarity = 0.0;
};

/// Argmax cosine between the generated label and each class name; ties go to
/// the lexicographically smaller class.
SemanticMatch map_label_semantic(const std::string& generated_label, std::span<const std::string> class_names,
                                 Embedder& embedder);

struct OpenSetResult {
  std::int64_t segment_id = 0;
  std::string true_class;
  std::string predicted;
  bool withheld = false;
  std::optional<std::string> generated_label;
  std::optional<std::string> mapped_class;
};

struct OpenSetReport {
  LabelSpaceMode mode;
  bool include_placeholder = true;
  std::vector<std::string> known_classes;
  std::vector<std::string> withheld_classes;
  double openness = 0.0;
  EvalReport eval;  // macro_f1 honours include_placeholder
  std::size_t labeled_windows = 0;
  std::size_t correctly_mapped = 0;
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_class_labeling;  // correct, total
  std::map<std::string, std::map<std::string, std::size_t>> generated_histogram;  // true class -> label -> count

  std::optional<double> labeling_accuracy() const;
  nlohmann::json to_json(bool include_runtime = true) const;
};

OpenSetReport openset_report(std::span<const OpenSetResult> results, const OpenSetSplit& split,
                             const LabelSpaceMode& mode, bool include_placeholder = true);

struct OpenSetRunOptions {
  LabelSpaceMode mode;
  bool include_placeholder = true;
  LlmClient* label_client = nullptr;  // when set, withheld test windows get a generated label
  Embedder* label_embedder = nullptr;  // for mapping; defaults to the pipeline's embedder
};

/// Fits normalization and indexes the split's indexing windows, then
/// classifies every test window.
OpenSetReport run_openset(Pipeline& pipeline, std::span<const SensorWindow> windows, const OpenSetSplit& split,
                          const OpenSetRunOptions& options = {});

}  // namespace statrag
