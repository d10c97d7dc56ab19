#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "statrag/pipeline.hpp"
#include "statrag/usage.hpp"

namespace statrag {

/// Rows are true labels, columns predicted labels, both in label order.
struct ConfusionMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<std::size_t>> counts;

  std::size_t total() const;
  std::size_t trace() const;
  double accuracy() const;
  std::size_t index_of(const std::string& label) const;
};

ConfusionMatrix confusion(std::span<const std::string> truth, std::span<const std::string> predicted,
                          std::span<const std::string> label_set);

struct ClassScores {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct F1Summary {
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  std::vector<ClassScores> per_class;
};

/// Per-class F1 with 0/0 -> 0. Macro averages every class in the matrix;
/// weighted uses true-class support (zero-support classes weigh nothing).
F1Summary f1_scores(const ConfusionMatrix& matrix);

// --- cost accounting ---

/// Currency per 1,000 estimated tokens.
struct CostRates {
  double embedding_per_1k = 0.0;
  double llm_input_per_1k = 0.0;
  double llm_output_per_1k = 0.0;
};

/// Tokens are estimated as ceil(chars / 4); this is an estimate, not a tokenizer count.
std::size_t estimate_tokens(std::size_t chars);

struct LedgerEntry {
  UsageRecord request;
  std::size_t tokens_in = 0;
  std::size_t tokens_out = 0;
  double cost = 0.0;
};

struct CostLedger {
  CostRates rates;
  std::vector<LedgerEntry> entries;
  std::size_t predictions = 0;

  std::size_t embedding_requests = 0;
  std::size_t embedding_chars = 0;
  std::size_t llm_requests = 0;
  std::size_t llm_chars_in = 0;
  std::size_t llm_chars_out = 0;
  double embedding_cost = 0.0;
  double llm_cost = 0.0;
  double total_cost = 0.0;

  double per_sample_cost() const;
};

/// Prices each logged request (local providers at 0) and totals them.
CostLedger replay_usage(std::span<const UsageRecord> log, const CostRates& rates, std::size_t predictions);

nlohmann::json cost_report_json(const CostLedger& ledger);
std::string cost_report(const CostLedger& ledger);

// --- benchmark ---

struct BaselineSummary {
  double threshold = 0.75;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::size_t abstain_fallbacks = 0;
};

struct WindowFailure {
  std::int64_t segment_id = 0;
  std::string error;
};

struct WindowResult {
  std::int64_t segment_id = 0;
  std::string truth;
  std::string predicted;
  ParseStatus parse_status = ParseStatus::Fallback;
  std::string baseline;
  std::vector<double> context_scores;
};

struct EvalReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  std::vector<ClassScores> per_class;
  ConfusionMatrix confusion;
  std::size_t n_samples = 0;
  std::size_t n_failed = 0;
  std::vector<WindowFailure> failures;
  std::vector<WindowResult> results;
  std::size_t exact = 0, fuzzy = 0, fallback = 0;
  std::optional<BaselineSummary> baseline;
  double runtime_seconds = 0.0;
  std::optional<CostLedger> cost;

  nlohmann::json to_json(bool include_runtime = true) const;
  std::string to_text() const;
  std::string confusion_csv() const;
};

/// Builds a report from parallel truth/prediction vectors.
EvalReport summarize(std::span<const std::string> truth, std::span<const std::string> predicted,
                     std::span<const std::string> label_set);

struct BenchmarkOptions {
  bool fit_normalization = true;
  bool run_baseline = true;
  std::optional<CostRates> rates;
  std::shared_ptr<UsageLog> usage;
};

/// Index, then classify every test window. Per-window failures are recorded
/// and counted without aborting the run.
EvalReport run_benchmark(Pipeline& pipeline, std::span<const SensorWindow> indexing_windows,
                         std::span<const SensorWindow> test_windows, const BenchmarkOptions& options = {});

}  // namespace statrag
