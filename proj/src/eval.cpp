#include "statrag/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iomanip>
#include <set>
#include <sstream>

#include "statrag/error.hpp"
#include "statrag/parallel.hpp"

namespace statrag {

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (const auto& row : counts) {
    for (auto c : row) n += c;
  }
  return n;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) n += counts[i][i];
  return n;
}

double ConfusionMatrix::accuracy() const {
  const auto n = total();
  return n == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(n);
}

std::size_t ConfusionMatrix::index_of(const std::string& label) const {
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) throw Error(ErrorCode::LabelOutOfSet, "label '" + label + "' not in label set");
  return static_cast<std::size_t>(it - labels.begin());
}

ConfusionMatrix confusion(std::span<const std::string> truth, std::span<const std::string> predicted,
                          std::span<const std::string> label_set) {
  if (truth.size() != predicted.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(truth.size()) + " truths vs " +
                                               std::to_string(predicted.size()) + " predictions");
  }
  ConfusionMatrix m;
  m.labels.assign(label_set.begin(), label_set.end());
  m.counts.assign(m.labels.size(), std::vector<std::size_t>(m.labels.size(), 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++m.counts[m.index_of(truth[i])][m.index_of(predicted[i])];
  }
  return m;
}

F1Summary f1_scores(const ConfusionMatrix& matrix) {
  F1Summary out;
  const std::size_t n = matrix.labels.size();
  std::size_t total_support = 0;
  double macro = 0.0;
  double weighted = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t tp = matrix.counts[i][i];
    std::size_t row = 0, col = 0;
    for (std::size_t j = 0; j < n; ++j) {
      row += matrix.counts[i][j];
      col += matrix.counts[j][i];
    }
    ClassScores s;
    s.label = matrix.labels[i];
    s.support = row;
    s.precision = col == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(col);
    s.recall = row == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(row);
    const double denom = s.precision + s.recall;
    s.f1 = denom == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / denom;
    macro += s.f1;
    weighted += s.f1 * static_cast<double>(row);
    total_support += row;
    out.per_class.push_back(std::move(s));
  }
  out.macro_f1 = n == 0 ? 0.0 : macro / static_cast<double>(n);
  out.weighted_f1 = total_support == 0 ? 0.0 : weighted / static_cast<double>(total_support);
  return out;
}

// --- cost ---

std::size_t estimate_tokens(std::size_t chars) { return (chars + 3) / 4; }

double CostLedger::per_sample_cost() const {
  return predictions == 0 ? 0.0 : total_cost / static_cast<double>(predictions);
}

CostLedger replay_usage(std::span<const UsageRecord> log, const CostRates& rates, std::size_t predictions) {
  CostLedger ledger;
  ledger.rates = rates;
  ledger.predictions = predictions;
  for (const auto& rec : log) {
    LedgerEntry e;
    e.request = rec;
    e.tokens_in = estimate_tokens(rec.chars_in);
    e.tokens_out = estimate_tokens(rec.chars_out);
    if (rec.kind == RequestKind::Embedding) {
      ++ledger.embedding_requests;
      ledger.embedding_chars += rec.chars_in;
      if (!rec.local) e.cost = static_cast<double>(e.tokens_in) / 1000.0 * rates.embedding_per_1k;
      ledger.embedding_cost += e.cost;
    } else {
      ++ledger.llm_requests;
      ledger.llm_chars_in += rec.chars_in;
      ledger.llm_chars_out += rec.chars_out;
      if (!rec.local) {
        e.cost = static_cast<double>(e.tokens_in) / 1000.0 * rates.llm_input_per_1k +
                 static_cast<double>(e.tokens_out) / 1000.0 * rates.llm_output_per_1k;
      }
      ledger.llm_cost += e.cost;
    }
    ledger.entries.push_back(std::move(e));
  }
  ledger.total_cost = ledger.embedding_cost + ledger.llm_cost;
  return ledger;
}

nlohmann::json cost_report_json(const CostLedger& l) {
  return {
      {"token_estimate", "ceil(chars / 4)"},
      {"rates_per_1k_tokens",
       {{"embedding", l.rates.embedding_per_1k},
        {"llm_input", l.rates.llm_input_per_1k},
        {"llm_output", l.rates.llm_output_per_1k}}},
      {"embedding", {{"requests", l.embedding_requests}, {"chars", l.embedding_chars}, {"cost", l.embedding_cost}}},
      {"llm",
       {{"requests", l.llm_requests},
        {"chars_in", l.llm_chars_in},
        {"chars_out", l.llm_chars_out},
        {"cost", l.llm_cost}}},
      {"total_cost", l.total_cost},
      {"predictions", l.predictions},
      {"per_sample_cost", l.per_sample_cost()},
  };
}

std::string cost_report(const CostLedger& l) {
  std::ostringstream os;
  os << std::fixed;
  os << "cost report (tokens estimated as ceil(chars/4))\n";
  os << "  embedding: " << l.embedding_requests << " requests, " << l.embedding_chars << " chars, $"
     << std::setprecision(6) << l.embedding_cost << "\n";
  os << "  llm:       " << l.llm_requests << " requests, " << l.llm_chars_in << " chars in, "
     << l.llm_chars_out << " chars out, $" << l.llm_cost << "\n";
  os << "  total:     $" << std::setprecision(4) << l.total_cost << "\n";
  os << "  per sample ($, " << l.predictions << " predictions): " << std::setprecision(6)
     << l.per_sample_cost() << "\n";
  return os.str();
}

// --- reports ---

EvalReport summarize(std::span<const std::string> truth, std::span<const std::string> predicted,
                     std::span<const std::string> label_set) {
  EvalReport r;
  r.confusion = confusion(truth, predicted, label_set);
  const auto f1 = f1_scores(r.confusion);
  r.accuracy = r.confusion.accuracy();
  r.macro_f1 = f1.macro_f1;
  r.weighted_f1 = f1.weighted_f1;
  r.per_class = f1.per_class;
  r.n_samples = truth.size();
  return r;
}

nlohmann::json EvalReport::to_json(bool include_runtime) const {
  nlohmann::json j;
  j["n_samples"] = n_samples;
  j["n_failed"] = n_failed;
  j["accuracy"] = accuracy;
  j["macro_f1"] = macro_f1;
  j["weighted_f1"] = weighted_f1;
  j["parse_status"] = {{"exact", exact}, {"fuzzy", fuzzy}, {"fallback", fallback}};
  auto& pc = j["per_class"] = nlohmann::json::array();
  for (const auto& s : per_class) {
    pc.push_back({{"label", s.label}, {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1},
                  {"support", s.support}});
  }
  j["confusion"] = {{"labels", confusion.labels}, {"counts", confusion.counts}};
  if (baseline) {
    j["retrieval_only"] = {{"threshold", baseline->threshold},
                           {"accuracy", baseline->accuracy},
                           {"macro_f1", baseline->macro_f1},
                           {"abstain_fallbacks", baseline->abstain_fallbacks}};
  }
  auto& fj = j["failures"] = nlohmann::json::array();
  for (const auto& f : failures) fj.push_back({{"segment_id", f.segment_id}, {"error", f.error}});
  if (cost) j["cost"] = cost_report_json(*cost);
  if (include_runtime) j["runtime_seconds"] = runtime_seconds;
  return j;
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "samples: " << n_samples << "  failed: " << n_failed << "\n";
  os << "accuracy: " << accuracy << "  macro-F1: " << macro_f1 << "  weighted-F1: " << weighted_f1 << "\n";
  if (baseline) {
    os << "retrieval-only (threshold " << baseline->threshold << "): accuracy " << baseline->accuracy
       << "  macro-F1 " << baseline->macro_f1 << "  fallbacks " << baseline->abstain_fallbacks << "\n";
  }
  std::size_t width = 5;
  for (const auto& s : per_class) width = std::max(width, s.label.size());
  os << std::left << std::setw(static_cast<int>(width)) << "class" << "  precision  recall     f1         support\n";
  for (const auto& s : per_class) {
    os << std::setw(static_cast<int>(width)) << s.label << "  " << std::setw(9) << s.precision << "  "
       << std::setw(9) << s.recall << "  " << std::setw(9) << s.f1 << "  " << s.support << "\n";
  }
  os << "runtime: " << std::setprecision(2) << runtime_seconds << " s\n";
  return os.str();
}

std::string EvalReport::confusion_csv() const {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  std::string out = "true\\predicted";
  for (const auto& l : confusion.labels) out += "," + quote(l);
  out += '\n';
  for (std::size_t i = 0; i < confusion.labels.size(); ++i) {
    out += quote(confusion.labels[i]);
    for (auto c : confusion.counts[i]) out += "," + std::to_string(c);
    out += '\n';
  }
  return out;
}

EvalReport run_benchmark(Pipeline& pipeline, std::span<const SensorWindow> indexing_windows,
                         std::span<const SensorWindow> test_windows, const BenchmarkOptions& options) {
  if (indexing_windows.empty()) throw Error(ErrorCode::ConfigInvalid, "indexing split is empty");
  if (test_windows.empty()) throw Error(ErrorCode::ConfigInvalid, "test split is empty");
  for (const auto& w : test_windows) {
    if (!w.label) throw Error(ErrorCode::ConfigInvalid, "test window without a ground-truth label");
  }
  const auto started = std::chrono::steady_clock::now();
  if (options.fit_normalization) pipeline.fit_normalization(indexing_windows);
  pipeline.index(indexing_windows);

  const auto labels = pipeline.label_set();
  const auto& instruction = pipeline.options().instruction;
  const double threshold = pipeline.options().threshold;

  struct Outcome {
    std::optional<WindowResult> result;
    std::optional<std::string> error;
  };
  const auto outcomes = parallel_map(test_windows.size(), pipeline.options().jobs, [&](std::size_t i) {
    const auto& w = test_windows[i];
    Outcome o;
    try {
      auto [texts, contexts] = pipeline.prepare(w);
      const auto prediction = pipeline.classify_prepared(texts, contexts, labels, instruction);
      WindowResult r;
      r.segment_id = w.segment_id;
      r.truth = *w.label;
      r.predicted = prediction.label;
      r.parse_status = prediction.parse_status;
      if (options.run_baseline) r.baseline = retrieve_only_classify(contexts, threshold).label;
      for (const auto& c : contexts) r.context_scores.push_back(c.fused_score);
      o.result = std::move(r);
    } catch (const std::exception& e) {
      o.error = e.what();
    }
    return o;
  });

  std::vector<std::string> truth, predicted, baseline;
  std::vector<WindowResult> results;
  std::vector<WindowFailure> failures;
  std::size_t baseline_fallbacks = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    if (o.error) {
      failures.push_back({test_windows[i].segment_id, *o.error});
      continue;
    }
    truth.push_back(o.result->truth);
    predicted.push_back(o.result->predicted);
    baseline.push_back(o.result->baseline);
    results.push_back(*o.result);
  }

  std::set<std::string> all(truth.begin(), truth.end());
  all.insert(predicted.begin(), predicted.end());
  const std::vector<std::string> label_order(all.begin(), all.end());
  EvalReport report = summarize(truth, predicted, label_order);
  report.n_failed = failures.size();
  report.failures = std::move(failures);
  for (const auto& r : results) {
    switch (r.parse_status) {
      case ParseStatus::Exact: ++report.exact; break;
      case ParseStatus::Fuzzy: ++report.fuzzy; break;
      case ParseStatus::Fallback: ++report.fallback; break;
    }
  }
  report.results = std::move(results);

  if (options.run_baseline && !truth.empty()) {
    std::set<std::string> ball(truth.begin(), truth.end());
    ball.insert(baseline.begin(), baseline.end());
    const std::vector<std::string> border(ball.begin(), ball.end());
    const auto bm = confusion(truth, baseline, border);
    BaselineSummary b;
    b.threshold = threshold;
    b.accuracy = bm.accuracy();
    b.macro_f1 = f1_scores(bm).macro_f1;
    // Recount fallbacks deterministically from the stored scores.
    for (const auto& r : report.results) {
      if (std::none_of(r.context_scores.begin(), r.context_scores.end(),
                       [&](double s) { return s >= threshold; })) {
        ++baseline_fallbacks;
      }
    }
    b.abstain_fallbacks = baseline_fallbacks;
    report.baseline = b;
  }
  if (options.rates && options.usage) {
    const auto log = options.usage->snapshot();
    report.cost = replay_usage(log, *options.rates, report.n_samples);
  }
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace statrag
