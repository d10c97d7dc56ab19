#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "statrag/llm.hpp"
#include "statrag/pipeline.hpp"
#include "statrag/random.hpp"

namespace statrag {

enum class Strategy : std::uint8_t { Exploration, Combination, Refinement };

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view name);

struct PromptCandidate {
  int id = 0;
  std::string instruction_text;
  std::optional<double> fitness;
  int iteration_born = 0;
  Strategy strategy = Strategy::Exploration;
  std::vector<int> parent_ids;

  /// Fitness is write-once.
  void set_fitness(double value);
  bool evaluated() const { return fitness.has_value(); }
};

/// Iterations 1..exploration_end explore, ..combination_end combine, the
/// rest refine.
struct PhaseSchedule {
  int exploration_end = 0;
  int combination_end = 0;
};

struct OptimizerConfig {
  std::size_t initial_candidates = 20;  // M
  std::size_t selected_per_iteration = 5;  // r
  int max_iterations = 10;               // P
  int patience = 3;                      // T
  std::size_t exemplar_count = 2;
  std::optional<PhaseSchedule> schedule;  // default: thirds of P
  std::uint64_t seed = 0;
  double validation_fraction = 1.0;
  std::string run_id = "run";
  std::optional<std::filesystem::path> log_dir;  // append JSON lines here when set

  void validate() const;
  PhaseSchedule effective_schedule() const;
  Strategy strategy_for(int iteration) const;
};

struct IterationRecord {
  int iteration = 0;
  Strategy strategy = Strategy::Exploration;
  std::vector<int> selected_ids;
  std::vector<PromptCandidate> candidates;  // born this iteration
  int best_id = 0;
  double best_fitness = 0.0;
  int stagnant = 0;
  std::size_t evaluations = 0;  // cumulative

  nlohmann::json to_json(std::string_view run_id, std::uint64_t seed) const;
};

struct OptimizerLog {
  std::string run_id;
  std::uint64_t seed = 0;
  std::vector<IterationRecord> iterations;

  std::string to_jsonl() const;
};

struct OptimizerResult {
  PromptCandidate best;
  OptimizerLog log;
  std::size_t evaluations = 0;
  bool stopped_by_patience = false;
};

std::string optimizer_log_filename(std::string_view run_id, std::uint64_t seed);

/// Meta-prompt for the initial pool: exemplars only.
std::string build_initial_meta_prompt(std::span<const std::string> exemplars);

std::string build_meta_prompt(std::span<const PromptCandidate> selected, Strategy strategy,
                              std::span<const std::string> exemplars);

/// n distinct non-empty instructions. Each slot is retried up to 3 times on
/// empty or duplicate output (duplicates include `existing`); slots that
/// still fail are dropped. Throws Error(DegenerateGeneration) if none remain.
std::vector<std::string> generate_candidates(LlmClient& client, std::string_view meta_prompt,
                                             std::size_t n, const std::set<std::string>& existing = {});

/// Draws r distinct candidates; each draw is fitness-proportional over the
/// ones not yet drawn, uniform when their fitness sums to zero.
std::vector<std::size_t> roulette_select(std::span<const PromptCandidate> candidates, std::size_t r, Rng& rng);

/// Macro-F1 of the classifier over the validation windows with `instruction` as system text.
double evaluate_fitness(std::string_view instruction, std::span<const SensorWindow> validation_windows,
                        const Pipeline& pipeline);

using FitnessFunction = std::function<double(const std::string& instruction)>;

OptimizerResult optimize(const OptimizerConfig& config, LlmClient& generator, const FitnessFunction& fitness,
                         std::span<const std::string> exemplars = {});

/// Retrieval for the validation set runs once; only the classifier call
/// depends on the instruction. The pipeline is never modified.
OptimizerResult optimize(const OptimizerConfig& config, LlmClient& generator, const Pipeline& pipeline,
                         std::span<const SensorWindow> validation_windows);

}  // namespace statrag
