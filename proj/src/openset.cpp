#include "statrag/openset.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>

#include "statrag/error.hpp"
#include "statrag/parallel.hpp"
#include "statrag/random.hpp"

namespace statrag {

namespace {

std::map<std::string, std::vector<std::int64_t>> ids_by_class(std::span<const SensorWindow> windows) {
  std::map<std::string, std::vector<std::int64_t>> out;
  for (const auto& w : windows) {
    if (!w.label) throw Error(ErrorCode::ConfigInvalid, "open-set split needs labeled windows");
    out[*w.label].push_back(w.segment_id);
  }
  return out;
}

std::size_t round_half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5)); }

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

}  // namespace

std::string_view to_string(LabelMode mode) {
  return mode == LabelMode::TrueLabelAvailable ? "available" : "hidden";
}

LabelMode label_mode_from_string(std::string_view name) {
  if (name == "available") return LabelMode::TrueLabelAvailable;
  if (name == "hidden") return LabelMode::TrueLabelHidden;
  throw Error(ErrorCode::ConfigInvalid, "unknown label mode '" + std::string(name) + "'");
}

std::size_t withheld_count(std::size_t classes, double openness) {
  if (!(openness > 0.0 && openness < 1.0)) throw Error(ErrorCode::ConfigInvalid, "openness must lie in (0, 1)");
  if (classes < 2) throw Error(ErrorCode::TooFewClasses, "open-set needs at least 2 classes");
  const auto n = round_half_up(openness * static_cast<double>(classes));
  return std::clamp<std::size_t>(n, 1, classes - 1);
}

OpenSetSplit make_openset_split(std::span<const SensorWindow> windows, double openness, std::uint64_t seed,
                                SplitFractions fractions) {
  if (fractions.validation < 0.0 || fractions.test < 0.0 || fractions.validation + fractions.test >= 1.0) {
    throw Error(ErrorCode::ConfigInvalid, "validation + test fractions must be < 1");
  }
  const auto by_class = ids_by_class(windows);
  std::vector<std::string> classes;
  for (const auto& [c, _] : by_class) classes.push_back(c);
  const auto n_withheld = withheld_count(classes.size(), openness);

  Rng rng(seed);
  auto shuffled = classes;
  portable_shuffle(shuffled.begin(), shuffled.end(), rng);

  OpenSetSplit split;
  split.openness = openness;
  split.withheld_classes.insert(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_withheld));
  for (const auto& c : classes) {
    if (!split.withheld_classes.contains(c)) split.known_classes.insert(c);
  }

  for (const auto& c : classes) {
    auto ids = by_class.at(c);
    if (split.withheld_classes.contains(c)) {
      split.test_ids.insert(split.test_ids.end(), ids.begin(), ids.end());
      continue;
    }
    portable_shuffle(ids.begin(), ids.end(), rng);
    const auto n = ids.size();
    auto n_test = round_half_up(fractions.test * static_cast<double>(n));
    auto n_val = round_half_up(fractions.validation * static_cast<double>(n));
    // Every known class keeps at least one indexed window.
    while (n_test + n_val >= n && n_test + n_val > 0) {
      if (n_val > 0) --n_val;
      else --n_test;
    }
    split.test_ids.insert(split.test_ids.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
    split.validation_ids.insert(split.validation_ids.end(), ids.begin() + static_cast<std::ptrdiff_t>(n_test),
                                ids.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
    split.indexing_ids.insert(split.indexing_ids.end(), ids.begin() + static_cast<std::ptrdiff_t>(n_test + n_val),
                              ids.end());
  }
  std::sort(split.indexing_ids.begin(), split.indexing_ids.end());
  std::sort(split.validation_ids.begin(), split.validation_ids.end());
  std::sort(split.test_ids.begin(), split.test_ids.end());
  return split;
}

OpenSetSplit leave_one_class_out(std::span<const SensorWindow> windows, const std::string& cls) {
  const auto by_class = ids_by_class(windows);
  if (!by_class.contains(cls)) throw Error(ErrorCode::UnknownClass, "class '" + cls + "' not in dataset");
  if (by_class.size() < 2) throw Error(ErrorCode::TooFewClasses, "leave-one-class-out needs at least 2 classes");
  OpenSetSplit split;
  split.openness = 1.0 / static_cast<double>(by_class.size());
  for (const auto& [c, ids] : by_class) {
    auto& target = c == cls ? split.test_ids : split.indexing_ids;
    target.insert(target.end(), ids.begin(), ids.end());
    (c == cls ? split.withheld_classes : split.known_classes).insert(c);
  }
  std::sort(split.indexing_ids.begin(), split.indexing_ids.end());
  std::sort(split.test_ids.begin(), split.test_ids.end());
  return split;
}

std::vector<SensorWindow> select_windows(std::span<const SensorWindow> windows, std::span<const std::int64_t> ids) {
  std::map<std::int64_t, const SensorWindow*> index;
  for (const auto& w : windows) index[w.segment_id] = &w;
  std::vector<SensorWindow> out;
  out.reserve(ids.size());
  for (auto id : ids) {
    const auto it = index.find(id);
    if (it == index.end()) throw Error(ErrorCode::ConfigInvalid, "segment " + std::to_string(id) + " not found");
    out.push_back(*it->second);
  }
  return out;
}

std::vector<std::string> openset_label_set(const OpenSetSplit& split, const LabelSpaceMode& mode) {
  std::set<std::string> out(split.known_classes.begin(), split.known_classes.end());
  if (mode.mode == LabelMode::TrueLabelHidden) {
    out.insert(mode.placeholder);
  } else {
    out.insert(split.withheld_classes.begin(), split.withheld_classes.end());
  }
  return {out.begin(), out.end()};
}

std::string openset_truth(const std::string& label, const OpenSetSplit& split, const LabelSpaceMode& mode) {
  if (mode.mode == LabelMode::TrueLabelHidden && split.is_withheld(label)) return mode.placeholder;
  return label;
}

Prediction openset_classify(const Pipeline& pipeline, const OpenSetSplit& split, const LabelSpaceMode& mode,
                            const SensorWindow& window) {
  const auto labels = openset_label_set(split, mode);
  return pipeline.classify(window, labels, pipeline.options().instruction).prediction;
}

bool contains_token(std::string_view text, std::string_view name) {
  if (name.empty()) return false;
  for (auto pos = text.find(name); pos != std::string_view::npos; pos = text.find(name, pos + 1)) {
    const bool left_ok = pos == 0 || !is_word_char(text[pos - 1]);
    const auto end = pos + name.size();
    const bool right_ok = end == text.size() || !is_word_char(text[end]);
    if (left_ok && right_ok) return true;
  }
  return false;
}

std::string normalize_generated_label(std::string_view reply) {
  auto line = reply.substr(0, reply.find('\n'));
  if (const auto colon = line.rfind(':'); colon != std::string_view::npos) line = line.substr(colon + 1);
  std::string cleaned;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const auto c = static_cast<unsigned char>(line[i]);
    const bool inner = i > 0 && i + 1 < line.size() && std::isalnum(static_cast<unsigned char>(line[i - 1])) &&
                       std::isalnum(static_cast<unsigned char>(line[i + 1]));
    if (std::isalnum(c)) {
      cleaned.push_back(static_cast<char>(std::tolower(c)));
    } else if ((c == '-' || c == '_') && inner) {
      cleaned.push_back(static_cast<char>(c));
    } else if (std::isspace(c)) {
      cleaned.push_back(' ');
    }
  }
  std::string out;
  std::size_t words = 0;
  std::size_t pos = 0;
  while (words < 4) {
    pos = cleaned.find_first_not_of(' ', pos);
    if (pos == std::string::npos) break;
    const auto end = std::min(cleaned.find(' ', pos), cleaned.size());
    if (!out.empty()) out += ' ';
    out += cleaned.substr(pos, end - pos);
    ++words;
    pos = end;
  }
  return out;
}

std::string generate_unseen_label(LlmClient& client, std::span<const RetrievalContext> contexts,
                                  const std::array<std::string, kSubsegments>& candidate_texts) {
  const std::string system =
      "You name human activities from statistical summaries of wearable sensor windows. The candidate "
      "below does not match any activity in the database. Reply with a short activity name of at most "
      "four words and nothing else.";
  std::string user = "== RETRIEVED SAMPLES (not matching) ==\n";
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    user += "-- sample " + std::to_string(i + 1) + " --\nLABEL: " + contexts[i].label + "\n";
    for (const auto& t : contexts[i].feature_texts) user += t + "\n";
  }
  user += "== CANDIDATE ==\n";
  for (const auto& t : candidate_texts) user += t + "\n";
  user += "Activity name:";
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto label = normalize_generated_label(client.complete(system, user));
    if (!label.empty()) return label;
  }
  throw Error(ErrorCode::EmptyLabel, "label generation returned nothing usable twice");
}

SemanticMatch map_label_semantic(const std::string& generated_label, std::span<const std::string> class_names,
                                 Embedder& embedder) {
  if (class_names.empty()) throw Error(ErrorCode::ConfigInvalid, "no class names to map onto");
  std::vector<std::string> sorted(class_names.begin(), class_names.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::string> texts{generated_label};
  texts.insert(texts.end(), sorted.begin(), sorted.end());
  const auto vectors = embedder.embed(texts);
  SemanticMatch best{sorted[0], cosine(vectors[0].values, vectors[1].values)};
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    const double s = cosine(vectors[0].values, vectors[i + 1].values);
    if (s > best.similarity) best = {sorted[i], s};
  }
  best.similarity = std::clamp(best.similarity, -1.0, 1.0);
  return best;
}

std::optional<double> OpenSetReport::labeling_accuracy() const {
  if (labeled_windows == 0) return std::nullopt;
  return static_cast<double>(correctly_mapped) / static_cast<double>(labeled_windows);
}

OpenSetReport openset_report(std::span<const OpenSetResult> results, const OpenSetSplit& split,
                             const LabelSpaceMode& mode, bool include_placeholder) {
  OpenSetReport r;
  r.mode = mode;
  r.include_placeholder = include_placeholder;
  r.known_classes.assign(split.known_classes.begin(), split.known_classes.end());
  r.withheld_classes.assign(split.withheld_classes.begin(), split.withheld_classes.end());
  r.openness = split.openness;

  std::vector<std::string> truth, predicted;
  for (const auto& res : results) {
    truth.push_back(openset_truth(res.true_class, split, mode));
    predicted.push_back(res.predicted);
    if (res.withheld && res.mapped_class) {
      ++r.labeled_windows;
      auto& [correct, total] = r.per_class_labeling[res.true_class];
      ++total;
      if (*res.mapped_class == res.true_class) {
        ++correct;
        ++r.correctly_mapped;
      }
    }
    if (res.withheld && res.generated_label) ++r.generated_histogram[res.true_class][*res.generated_label];
  }
  std::set<std::string> all(truth.begin(), truth.end());
  all.insert(predicted.begin(), predicted.end());
  const std::vector<std::string> order(all.begin(), all.end());
  r.eval = summarize(truth, predicted, order);
  if (!include_placeholder) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : r.eval.per_class) {
      if (s.label == mode.placeholder) continue;
      sum += s.f1;
      ++n;
    }
    r.eval.macro_f1 = n == 0 ? 0.0 : sum / static_cast<double>(n);
  }
  return r;
}

nlohmann::json OpenSetReport::to_json(bool include_runtime) const {
  auto j = eval.to_json(include_runtime);
  j["mode"] = to_string(mode.mode);
  j["placeholder"] = mode.placeholder;
  j["macro_f1_includes_placeholder"] = include_placeholder;
  j["openness"] = openness;
  j["known_classes"] = known_classes;
  auto& w = j["withheld"];
  w["classes"] = withheld_classes;
  w["count"] = withheld_classes.size();
  w["labeled_windows"] = labeled_windows;
  const auto acc = labeling_accuracy();
  w["labeling_accuracy"] = acc ? nlohmann::json(*acc) : nlohmann::json(nullptr);
  auto& per = w["per_class_labeling"] = nlohmann::json::object();
  for (const auto& [cls, ct] : per_class_labeling) {
    per[cls] = {{"correct", ct.first},
                {"total", ct.second},
                {"accuracy", static_cast<double>(ct.first) / static_cast<double>(ct.second)}};
  }
  w["generated_label_histogram"] = generated_histogram;
  return j;
}

OpenSetReport run_openset(Pipeline& pipeline, std::span<const SensorWindow> windows, const OpenSetSplit& split,
                          const OpenSetRunOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  const auto indexing = select_windows(windows, split.indexing_ids);
  const auto test = select_windows(windows, split.test_ids);
  if (indexing.empty() || test.empty()) throw Error(ErrorCode::ConfigInvalid, "open-set split has an empty side");
  pipeline.fit_normalization(indexing);
  pipeline.index(indexing);

  const auto labels = openset_label_set(split, options.mode);
  std::vector<std::string> all_classes(split.known_classes.begin(), split.known_classes.end());
  all_classes.insert(all_classes.end(), split.withheld_classes.begin(), split.withheld_classes.end());
  Embedder& label_embedder = options.label_embedder ? *options.label_embedder : pipeline.embedder();

  struct Outcome {
    std::optional<OpenSetResult> result;
    std::optional<std::string> error;
  };
  const auto outcomes = parallel_map(test.size(), pipeline.options().jobs, [&](std::size_t i) {
    const auto& w = test[i];
    Outcome o;
    try {
      auto [texts, contexts] = pipeline.prepare(w);
      OpenSetResult res;
      res.segment_id = w.segment_id;
      res.true_class = *w.label;
      res.withheld = split.is_withheld(*w.label);
      res.predicted = pipeline.classify_prepared(texts, contexts, labels, pipeline.options().instruction).label;
      if (res.withheld && options.label_client) {
        res.generated_label = generate_unseen_label(*options.label_client, contexts, texts);
        res.mapped_class = map_label_semantic(*res.generated_label, all_classes, label_embedder).cls;
      }
      o.result = std::move(res);
    } catch (const std::exception& e) {
      o.error = e.what();
    }
    return o;
  });

  std::vector<OpenSetResult> results;
  std::vector<WindowFailure> failures;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].error) {
      failures.push_back({test[i].segment_id, *outcomes[i].error});
    } else {
      results.push_back(*outcomes[i].result);
    }
  }
  auto report = openset_report(results, split, options.mode, options.include_placeholder);
  report.eval.n_failed = failures.size();
  report.eval.failures = std::move(failures);
  report.eval.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace statrag
