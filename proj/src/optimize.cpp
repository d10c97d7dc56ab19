#include "statrag/optimize.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>

#include "statrag/error.hpp"
#include "statrag/eval.hpp"
#include "statrag/parallel.hpp"

namespace statrag {

namespace {

constexpr std::string_view kStrategyKey = "STRATEGY: ";
constexpr std::string_view kInstructionsHeader = "== INSTRUCTIONS ==";
constexpr std::string_view kInstructionPrefix = "-- instruction ";
constexpr std::string_view kFitnessKey = "(fitness=";
constexpr std::string_view kEndMarker = "-- end --";
constexpr int kGenerationAttempts = 3;

std::string_view directive(Strategy s) {
  switch (s) {
    case Strategy::Exploration:
      return "Generate diverse instructions: write a new instruction that takes a different approach "
             "and wording from any shown below.";
    case Strategy::Combination:
      return "Apply crossover and mutation to the best-performing instructions below: combine their "
             "strongest parts into one instruction and mutate at least one clause.";
    case Strategy::Refinement:
      return "Rephrase the best-performing instruction below literally: keep its meaning and "
             "structure, and make the wording clearer and more precise.";
  }
  return "";
}

std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
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

void append_exemplars(std::string& out, std::span<const std::string> exemplars) {
  if (exemplars.empty()) return;
  out += "== EXEMPLARS ==\n";
  out += "Each exemplar is a user prompt the classifier receives.\n";
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    out += "-- exemplar " + std::to_string(i + 1) + " --\n";
    out += exemplars[i];
    if (!exemplars[i].empty() && exemplars[i].back() != '\n') out += '\n';
    out += kEndMarker;
    out += '\n';
  }
}

}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Exploration: return "Exploration";
    case Strategy::Combination: return "Combination";
    case Strategy::Refinement: return "Refinement";
  }
  return "?";
}

Strategy strategy_from_string(std::string_view name) {
  for (auto s : {Strategy::Exploration, Strategy::Combination, Strategy::Refinement}) {
    if (to_string(s) == name) return s;
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown strategy '" + std::string(name) + "'");
}

void PromptCandidate::set_fitness(double value) {
  if (fitness) throw Error(ErrorCode::ConfigInvalid, "fitness of candidate " + std::to_string(id) + " already set");
  fitness = value;
}

void OptimizerConfig::validate() const {
  if (initial_candidates < 1) throw Error(ErrorCode::ConfigInvalid, "M must be >= 1");
  if (selected_per_iteration < 1 || selected_per_iteration > initial_candidates) {
    throw Error(ErrorCode::ConfigInvalid, "r must satisfy 1 <= r <= M");
  }
  if (max_iterations < 0) throw Error(ErrorCode::ConfigInvalid, "P must be >= 0");
  if (patience < 1 || (max_iterations > 0 && patience > max_iterations)) {
    throw Error(ErrorCode::ConfigInvalid, "T must satisfy 1 <= T <= P");
  }
  if (!(validation_fraction > 0.0 && validation_fraction <= 1.0)) {
    throw Error(ErrorCode::ConfigInvalid, "validation_fraction must lie in (0, 1]");
  }
  if (schedule && (schedule->exploration_end < 0 || schedule->combination_end < schedule->exploration_end)) {
    throw Error(ErrorCode::ConfigInvalid, "phase schedule must be ordered");
  }
}

PhaseSchedule OptimizerConfig::effective_schedule() const {
  if (schedule) return *schedule;
  return {max_iterations / 3, (2 * max_iterations) / 3};
}

Strategy OptimizerConfig::strategy_for(int iteration) const {
  const auto s = effective_schedule();
  if (iteration <= s.exploration_end) return Strategy::Exploration;
  if (iteration <= s.combination_end) return Strategy::Combination;
  return Strategy::Refinement;
}

nlohmann::json IterationRecord::to_json(std::string_view run_id, std::uint64_t seed) const {
  nlohmann::json j;
  j["log_version"] = 1;
  j["run_id"] = run_id;
  j["seed"] = seed;
  j["iteration"] = iteration;
  j["strategy"] = to_string(strategy);
  j["selected"] = selected_ids;
  auto& cs = j["candidates"] = nlohmann::json::array();
  for (const auto& c : candidates) {
    cs.push_back({{"id", c.id},
                  {"text", c.instruction_text},
                  {"fitness", c.fitness ? nlohmann::json(*c.fitness) : nlohmann::json(nullptr)},
                  {"iteration_born", c.iteration_born},
                  {"strategy", to_string(c.strategy)},
                  {"parents", c.parent_ids}});
  }
  j["best_id"] = best_id;
  j["best_fitness"] = best_fitness;
  j["stagnant"] = stagnant;
  j["evaluations"] = evaluations;
  return j;
}

std::string OptimizerLog::to_jsonl() const {
  std::string out;
  for (const auto& it : iterations) {
    out += it.to_json(run_id, seed).dump();
    out += '\n';
  }
  return out;
}

std::string optimizer_log_filename(std::string_view run_id, std::uint64_t seed) {
  return "optimizer_" + std::string(run_id) + "_seed" + std::to_string(seed) + ".jsonl";
}

std::string build_initial_meta_prompt(std::span<const std::string> exemplars) {
  std::string out =
      "You write system instructions for a language model that classifies human activities from "
      "statistical summaries of wearable sensor windows. The classifier sees labeled samples "
      "retrieved from a database and one unlabeled candidate, and must name the candidate's activity.\n";
  out += kStrategyKey;
  out += to_string(Strategy::Exploration);
  out += "\nDIRECTIVE: Generate diverse instructions: write one self-contained system instruction "
         "for this classifier.\n";
  append_exemplars(out, exemplars);
  out += "Return exactly one instruction as plain text, without numbering or commentary.\n";
  return out;
}

std::string build_meta_prompt(std::span<const PromptCandidate> selected, Strategy strategy,
                              std::span<const std::string> exemplars) {
  std::string out =
      "You write system instructions for a language model that classifies human activities from "
      "statistical summaries of wearable sensor windows. Below are previous instructions with their "
      "validation F1 fitness; higher is better.\n";
  out += kStrategyKey;
  out += to_string(strategy);
  out += "\nDIRECTIVE: ";
  out += directive(strategy);
  out += '\n';
  if (!selected.empty()) {
    out += kInstructionsHeader;
    out += '\n';
    for (std::size_t i = 0; i < selected.size(); ++i) {
      out += kInstructionPrefix;
      out += std::to_string(i + 1) + " ";
      out += kFitnessKey;
      out += format_value(selected[i].fitness.value_or(0.0));
      out += ") --\n";
      out += selected[i].instruction_text;
      out += '\n';
      out += kEndMarker;
      out += '\n';
    }
  }
  append_exemplars(out, exemplars);
  out += "Return exactly one new instruction as plain text, without numbering or commentary.\n";
  return out;
}

std::vector<std::string> generate_candidates(LlmClient& client, std::string_view meta_prompt, std::size_t n,
                                             const std::set<std::string>& existing) {
  if (n < 1) throw Error(ErrorCode::ConfigInvalid, "n must be >= 1");
  constexpr std::string_view kSystem = "You are an expert prompt engineer.";
  std::vector<std::string> out;
  std::set<std::string> seen = existing;
  std::size_t dropped = 0;
  for (std::size_t slot = 0; slot < n; ++slot) {
    bool filled = false;
    for (int attempt = 0; attempt < kGenerationAttempts && !filled; ++attempt) {
      std::string text(trim(client.complete(kSystem, meta_prompt)));
      if (text.empty() || seen.contains(text)) continue;
      seen.insert(text);
      out.push_back(std::move(text));
      filled = true;
    }
    if (!filled) ++dropped;
  }
  if (dropped > 0 && !out.empty()) {
    std::cerr << "warning: " << dropped << " of " << n
              << " generated instructions were empty or duplicates and were dropped\n";
  }
  if (out.empty()) throw Error(ErrorCode::DegenerateGeneration, "optimizer model produced no usable instruction");
  return out;
}

std::vector<std::size_t> roulette_select(std::span<const PromptCandidate> candidates, std::size_t r, Rng& rng) {
  for (const auto& c : candidates) {
    if (!c.fitness) throw Error(ErrorCode::NotEvaluated, "candidate " + std::to_string(c.id) + " has no fitness");
  }
  if (r > candidates.size()) throw Error(ErrorCode::ConfigInvalid, "r exceeds candidate count");
  std::vector<std::size_t> remaining(candidates.size());
  for (std::size_t i = 0; i < remaining.size(); ++i) remaining[i] = i;
  std::vector<std::size_t> chosen;
  chosen.reserve(r);
  for (std::size_t draw = 0; draw < r; ++draw) {
    double total = 0.0;
    for (auto i : remaining) total += std::max(0.0, *candidates[i].fitness);
    std::size_t pick = 0;
    if (total <= 0.0) {
      pick = uniform_index(rng, remaining.size());
    } else {
      const double u = uniform01(rng) * total;
      double acc = 0.0;
      pick = remaining.size();
      std::size_t last_positive = 0;
      for (std::size_t j = 0; j < remaining.size(); ++j) {
        const double f = std::max(0.0, *candidates[remaining[j]].fitness);
        if (f <= 0.0) continue;
        last_positive = j;
        acc += f;
        if (u < acc) {
          pick = j;
          break;
        }
      }
      if (pick == remaining.size()) pick = last_positive;  // rounding at the top end
    }
    chosen.push_back(remaining[pick]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return chosen;
}

namespace {

struct PreparedSample {
  std::array<std::string, kSubsegments> texts;
  std::vector<RetrievalContext> contexts;
  std::string truth;
};

double fitness_over(const Pipeline& pipeline, std::span<const PreparedSample> samples, std::string_view instruction) {
  const auto labels = pipeline.label_set();
  const auto predicted = parallel_map(samples.size(), pipeline.options().jobs, [&](std::size_t i) {
    return pipeline.classify_prepared(samples[i].texts, samples[i].contexts, labels, instruction).label;
  });
  std::vector<std::string> truth;
  for (const auto& s : samples) truth.push_back(s.truth);
  std::set<std::string> all(truth.begin(), truth.end());
  all.insert(predicted.begin(), predicted.end());
  const std::vector<std::string> order(all.begin(), all.end());
  return f1_scores(confusion(truth, predicted, order)).macro_f1;
}

std::vector<PreparedSample> prepare_all(const Pipeline& pipeline, std::span<const SensorWindow> windows) {
  for (const auto& w : windows) {
    if (!w.label) throw Error(ErrorCode::ConfigInvalid, "validation window without a label");
  }
  return parallel_map(windows.size(), pipeline.options().jobs, [&](std::size_t i) {
    auto [texts, contexts] = pipeline.prepare(windows[i]);
    return PreparedSample{std::move(texts), std::move(contexts), *windows[i].label};
  });
}

}  // namespace

double evaluate_fitness(std::string_view instruction, std::span<const SensorWindow> validation_windows,
                        const Pipeline& pipeline) {
  if (validation_windows.empty()) throw Error(ErrorCode::ConfigInvalid, "validation set is empty");
  const auto samples = prepare_all(pipeline, validation_windows);
  return fitness_over(pipeline, samples, instruction);
}

OptimizerResult optimize(const OptimizerConfig& config, LlmClient& generator, const FitnessFunction& fitness,
                         std::span<const std::string> exemplars) {
  config.validate();
  Rng rng(config.seed);
  OptimizerResult result;
  result.log.run_id = config.run_id;
  result.log.seed = config.seed;

  std::optional<std::ofstream> sink;
  if (config.log_dir) {
    std::filesystem::create_directories(*config.log_dir);
    const auto path = *config.log_dir / optimizer_log_filename(config.run_id, config.seed);
    sink.emplace(path, std::ios::app);
    if (!*sink) throw Error(ErrorCode::IoError, "cannot open optimizer log " + path.string());
  }
  auto commit = [&](IterationRecord rec) {
    if (sink) {
      *sink << rec.to_json(config.run_id, config.seed).dump() << '\n';
      sink->flush();
    }
    result.log.iterations.push_back(std::move(rec));
  };

  std::vector<PromptCandidate> pool;
  std::set<std::string> known_texts;
  int next_id = 0;
  std::size_t best_index = 0;

  auto evaluate_batch = [&](std::vector<PromptCandidate>& batch) {
    for (auto& c : batch) {
      c.set_fitness(fitness(c.instruction_text));
      ++result.evaluations;
    }
  };

  // Iteration 0: the initial pool of M.
  {
    const auto texts = generate_candidates(generator, build_initial_meta_prompt(exemplars),
                                           config.initial_candidates, known_texts);
    std::vector<PromptCandidate> batch;
    for (const auto& t : texts) {
      batch.push_back({next_id++, t, std::nullopt, 0, Strategy::Exploration, {}});
      known_texts.insert(t);
    }
    evaluate_batch(batch);
    for (auto& c : batch) pool.push_back(c);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (*pool[i].fitness > *pool[best_index].fitness) best_index = i;
    }
    IterationRecord rec;
    rec.iteration = 0;
    rec.strategy = Strategy::Exploration;
    rec.candidates = std::move(batch);
    rec.best_id = pool[best_index].id;
    rec.best_fitness = *pool[best_index].fitness;
    rec.evaluations = result.evaluations;
    commit(std::move(rec));
  }

  int stagnant = 0;
  for (int iteration = 1; iteration <= config.max_iterations; ++iteration) {
    const Strategy strategy = config.strategy_for(iteration);
    const std::size_t r = std::min(config.selected_per_iteration, pool.size());
    const auto picks = roulette_select(pool, r, rng);
    std::vector<PromptCandidate> selected;
    std::vector<int> selected_ids;
    for (auto i : picks) {
      selected.push_back(pool[i]);
      selected_ids.push_back(pool[i].id);
    }
    const auto meta = build_meta_prompt(selected, strategy, exemplars);

    std::vector<PromptCandidate> batch;
    try {
      const auto texts = generate_candidates(generator, meta, config.selected_per_iteration, known_texts);
      for (const auto& t : texts) {
        batch.push_back({next_id++, t, std::nullopt, iteration, strategy, selected_ids});
        known_texts.insert(t);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateGeneration) throw;
      // Nothing new this round: counts as a stagnant iteration.
    }
    evaluate_batch(batch);

    const double previous_best = *pool[best_index].fitness;
    for (auto& c : batch) pool.push_back(c);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (*pool[i].fitness > *pool[best_index].fitness) best_index = i;
    }
    stagnant = *pool[best_index].fitness > previous_best ? 0 : stagnant + 1;

    IterationRecord rec;
    rec.iteration = iteration;
    rec.strategy = strategy;
    rec.selected_ids = std::move(selected_ids);
    rec.candidates = std::move(batch);
    rec.best_id = pool[best_index].id;
    rec.best_fitness = *pool[best_index].fitness;
    rec.stagnant = stagnant;
    rec.evaluations = result.evaluations;
    commit(std::move(rec));

    if (stagnant >= config.patience) {
      result.stopped_by_patience = true;
      break;
    }
  }
  result.best = pool[best_index];
  return result;
}

OptimizerResult optimize(const OptimizerConfig& config, LlmClient& generator, const Pipeline& pipeline,
                         std::span<const SensorWindow> validation_windows) {
  config.validate();
  if (validation_windows.empty()) throw Error(ErrorCode::ConfigInvalid, "validation set is empty");
  std::vector<SensorWindow> subset(validation_windows.begin(), validation_windows.end());
  if (config.validation_fraction < 1.0) {
    // One fixed subsample per run keeps fitness values comparable across iterations.
    Rng rng(config.seed ^ 0xA5A5A5A5ULL);
    portable_shuffle(subset.begin(), subset.end(), rng);
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(config.validation_fraction * static_cast<double>(subset.size()))));
    subset.resize(keep);
    std::sort(subset.begin(), subset.end(),
              [](const SensorWindow& a, const SensorWindow& b) { return a.segment_id < b.segment_id; });
  }
  const auto samples = prepare_all(pipeline, subset);

  std::vector<std::string> exemplars;
  const auto labels = pipeline.label_set();
  for (std::size_t i = 0; i < std::min(config.exemplar_count, samples.size()); ++i) {
    exemplars.push_back(build_prompt(pipeline.options().instruction, samples[i].contexts, samples[i].texts, labels)
                            .user_text);
  }
  const FitnessFunction fitness = [&](const std::string& instruction) {
    return fitness_over(pipeline, samples, instruction);
  };
  return optimize(config, generator, fitness, exemplars);
}

// --- mock optimizer model ---

namespace {

const std::vector<std::string> kOpenings = {
    "You are a human activity recognition expert.",
    "You classify wearable sensor windows into activities.",
    "Act as a careful analyst of inertial sensor statistics.",
    "You are an assistant that labels physical activities from motion summaries.",
    "Your job is to recognize what a person is doing from sensor statistics.",
};
const std::vector<std::string> kFocus = {
    "Compare the candidate's per-channel statistics with every labeled sample.",
    "Weigh the full-window statistics most, then the start, mid and end thirds.",
    "Pay close attention to std, range and n_peaks, which separate dynamic from static activities.",
    "Look for the labeled samples whose mean and quantiles are closest to the candidate's.",
    "Use the similarity scores of the labeled samples as supporting evidence only.",
    "Check whether the candidate's intensity pattern changes across the start, mid and end thirds.",
};
const std::vector<std::string> kDecision = {
    "Choose the label whose samples match the candidate best overall.",
    "Prefer the label supported by the most closely matching samples.",
    "When samples disagree, favour the label of the highest-scoring consistent group.",
    "Decide on exactly one admissible label.",
};
const std::vector<std::pair<std::string, std::string>> kRewrites = {
    {"Compare", "Contrast"},          {"statistics", "feature values"}, {"closest", "nearest"},
    {"best", "most closely"},         {"careful", "meticulous"},        {"Choose", "Select"},
    {"attention", "heed"},            {"evidence", "support"},          {"expert", "specialist"},
};

template <typename T>
const T& pick(const std::vector<T>& bank, Rng& rng) {
  return bank[uniform_index(rng, bank.size())];
}

std::vector<std::string> sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    cur.push_back(c);
    if (c == '.' || c == '!' || c == '?') {
      const auto t = trim(cur);
      if (!t.empty()) out.emplace_back(t);
      cur.clear();
    }
  }
  if (!trim(cur).empty()) out.emplace_back(trim(cur));
  return out;
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += ' ';
    out += p;
  }
  return out;
}

struct ParsedMeta {
  Strategy strategy = Strategy::Exploration;
  std::vector<std::pair<double, std::string>> instructions;  // fitness, text
};

ParsedMeta parse_meta(std::string_view meta) {
  ParsedMeta out;
  std::optional<double> pending;
  std::string body;
  bool in_block = false;
  for (auto line : lines_of(meta)) {
    if (line.starts_with(kStrategyKey)) {
      out.strategy = strategy_from_string(trim(line.substr(kStrategyKey.size())));
    } else if (line.starts_with(kInstructionPrefix)) {
      in_block = true;
      body.clear();
      pending = 0.0;
      const auto at = line.find(kFitnessKey);
      if (at != std::string_view::npos) {
        double v = 0.0;
        const char* first = line.data() + at + kFitnessKey.size();
        if (std::from_chars(first, line.data() + line.size(), v).ec == std::errc{}) pending = v;
      }
    } else if (in_block && line == kEndMarker) {
      out.instructions.emplace_back(pending.value_or(0.0), std::string(trim(body)));
      in_block = false;
    } else if (in_block) {
      body += line;
      body += '\n';
    }
  }
  std::stable_sort(out.instructions.begin(), out.instructions.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  return out;
}

}  // namespace

MockTemplatesClient::MockTemplatesClient(std::uint64_t seed, std::shared_ptr<UsageLog> usage)
    : rng_(seed), usage_(std::move(usage)) {}

std::string MockTemplatesClient::complete(std::string_view system, std::string_view user) {
  std::lock_guard lock(mutex_);
  const auto meta = parse_meta(user);
  std::string reply;
  auto fresh = [&] {
    std::vector<std::string> parts = {pick(kOpenings, rng_), pick(kFocus, rng_)};
    if (uniform01(rng_) < 0.5) parts.push_back(pick(kFocus, rng_));
    parts.push_back(pick(kDecision, rng_));
    return join(parts);
  };
  if (meta.instructions.empty() || meta.strategy == Strategy::Exploration) {
    reply = fresh();
  } else if (meta.strategy == Strategy::Combination) {
    const auto a = sentences(meta.instructions[0].second);
    const auto b = sentences(meta.instructions.size() > 1 ? meta.instructions[1].second
                                                          : meta.instructions[0].second);
    std::vector<std::string> child(a.begin(), a.begin() + static_cast<std::ptrdiff_t>((a.size() + 1) / 2));
    child.insert(child.end(), b.begin() + static_cast<std::ptrdiff_t>(b.size() / 2), b.end());
    if (!child.empty()) child[uniform_index(rng_, child.size())] = pick(kFocus, rng_);  // mutation
    reply = join(child);
  } else {
    std::string text = meta.instructions[0].second;
    for (int tries = 0; tries < 3; ++tries) {
      const auto& [from, to] = pick(kRewrites, rng_);
      const auto pos = text.find(from);
      if (pos != std::string::npos) text.replace(pos, from.size(), to);
    }
    reply = text;
  }
  if (usage_) {
    usage_->record({RequestKind::Chat, provider_id(), true, system.size() + user.size(), reply.size(), "optimize"});
  }
  return reply;
}

}  // namespace statrag
