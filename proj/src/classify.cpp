#include "statrag/classify.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <set>

#include "statrag/error.hpp"

namespace statrag {

namespace {

constexpr std::string_view kLabeledHeader = "== LABELED SAMPLES ==";
constexpr std::string_view kCandidateHeader = "== CANDIDATE ==";
constexpr std::string_view kSamplePrefix = "-- sample ";
constexpr std::string_view kScoreKey = "(score=";

std::string lower(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return out;
}

std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto end = nl == std::string_view::npos ? text.size() : nl;
    lines.push_back(text.substr(pos, end - pos));
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return lines;
}

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

bool contains_word(std::string_view haystack, std::string_view word) {
  if (word.empty()) return false;
  std::size_t pos = haystack.find(word);
  while (pos != std::string_view::npos) {
    const bool left_ok = pos == 0 || !word_char(haystack[pos - 1]);
    const std::size_t after = pos + word.size();
    const bool right_ok = after >= haystack.size() || !word_char(haystack[after]);
    if (left_ok && right_ok) return true;
    pos = haystack.find(word, pos + 1);
  }
  return false;
}

void append_texts(std::string& out, const std::array<std::string, kSubsegments>& texts) {
  for (const auto& t : texts) {
    out += t;
    if (!t.empty() && t.back() != '\n') out += '\n';
  }
}

}  // namespace

std::string_view to_string(ParseStatus status) {
  switch (status) {
    case ParseStatus::Exact: return "exact";
    case ParseStatus::Fuzzy: return "fuzzy";
    case ParseStatus::Fallback: return "fallback";
  }
  return "unknown";
}

std::string default_instruction() {
  return "You are a human activity recognition expert. Each sample summarizes one window of "
         "wearable sensor data with statistics (mean, max, min, q1, q3, std, median, n_peaks) per "
         "channel, computed over the full window and over its start, mid and end thirds. Compare "
         "the statistics of the CANDIDATE with those of the LABELED SAMPLES and decide which "
         "activity the candidate shows.";
}

std::string render_system_text(std::string_view instruction, std::span<const std::string> label_set) {
  std::string out(trim(instruction));
  out += "\n\nAdmissible labels: ";
  for (std::size_t i = 0; i < label_set.size(); ++i) {
    if (i) out += ", ";
    out += label_set[i];
  }
  out += "\nAnswer with a first line of the form `label: <one of the admissible labels>` "
         "followed by a one-sentence rationale.";
  return out;
}

PromptBundle build_prompt(std::string_view instruction, std::span<const RetrievalContext> contexts,
                          const std::array<std::string, kSubsegments>& candidate_texts,
                          std::vector<std::string> label_set) {
  if (contexts.empty()) throw Error(ErrorCode::EmptyContexts, "no retrieved contexts");
  if (label_set.empty()) throw Error(ErrorCode::ConfigInvalid, "label set is empty");
  if (std::set<std::string>(label_set.begin(), label_set.end()).size() != label_set.size()) {
    throw Error(ErrorCode::ConfigInvalid, "label set has duplicates");
  }
  for (const auto& t : candidate_texts) {
    if (t.empty()) throw Error(ErrorCode::EmptyContexts, "candidate is missing a scope text");
  }

  std::vector<const RetrievalContext*> ordered;
  for (const auto& c : contexts) ordered.push_back(&c);
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
    return ranks_before({a->segment_id, a->fused_score}, {b->segment_id, b->fused_score});
  });

  PromptBundle bundle;
  bundle.system_text = render_system_text(instruction, label_set);
  std::string& user = bundle.user_text;
  user += kLabeledHeader;
  user += '\n';
  for (std::size_t rank = 0; rank < ordered.size(); ++rank) {
    const auto& ctx = *ordered[rank];
    user += kSamplePrefix;
    user += std::to_string(rank + 1);
    user += ' ';
    user += kScoreKey;
    user += format_value(ctx.fused_score);
    user += ") --\nLABEL: ";
    user += ctx.label;
    user += '\n';
    append_texts(user, ctx.feature_texts);
  }
  user += kCandidateHeader;
  user += '\n';
  append_texts(user, candidate_texts);
  bundle.label_set = std::move(label_set);
  return bundle;
}

ParsedLabel parse_prediction(std::string_view raw, std::span<const std::string> label_set) {
  if (label_set.empty()) return {"", ParseStatus::Fallback};
  for (auto line : split_lines(raw)) {
    line = trim(line);
    // Tolerate markdown emphasis around the key.
    while (!line.empty() && (line.front() == '*' || line.front() == '`')) line.remove_prefix(1);
    if (line.size() < 6 || lower(line.substr(0, 6)) != "label:") continue;
    std::string_view value = trim(line.substr(6));
    while (!value.empty() && std::string_view("*`'\".").find(value.back()) != std::string_view::npos) {
      value.remove_suffix(1);
    }
    while (!value.empty() && std::string_view("*`'\"").find(value.front()) != std::string_view::npos) {
      value.remove_prefix(1);
    }
    const std::string wanted = lower(trim(value));
    for (const auto& member : label_set) {
      if (lower(member) == wanted) return {member, ParseStatus::Exact};
    }
  }
  const std::string haystack = lower(raw);
  const std::string* unique = nullptr;
  std::size_t hits = 0;
  for (const auto& member : label_set) {
    if (contains_word(haystack, lower(member))) {
      ++hits;
      unique = &member;
    }
  }
  if (hits == 1) return {*unique, ParseStatus::Fuzzy};
  return {*std::min_element(label_set.begin(), label_set.end()), ParseStatus::Fallback};
}

Prediction llm_classify(LlmClient& client, const PromptBundle& prompt) {
  Prediction out;
  out.raw_response = client.complete(prompt.system_text, prompt.user_text);
  const auto parsed = parse_prediction(out.raw_response, prompt.label_set);
  out.label = parsed.label;
  out.parse_status = parsed.status;
  std::string rationale;
  for (auto line : split_lines(out.raw_response)) {
    const auto t = trim(line);
    if (t.empty()) continue;
    if (t.size() >= 6 && lower(t.substr(0, 6)) == "label:") continue;
    if (!rationale.empty()) rationale += ' ';
    rationale += t;
  }
  out.rationale = std::move(rationale);
  return out;
}

std::vector<LabeledSampleRef> parse_labeled_samples(std::string_view user_text) {
  std::vector<LabeledSampleRef> out;
  bool in_labeled = false;
  double pending_score = 0.0;
  for (auto line : split_lines(user_text)) {
    if (line == kLabeledHeader) {
      in_labeled = true;
      continue;
    }
    if (line == kCandidateHeader) break;
    if (!in_labeled) continue;
    if (line.starts_with(kSamplePrefix)) {
      pending_score = 0.0;
      const auto at = line.find(kScoreKey);
      if (at != std::string_view::npos) {
        const char* first = line.data() + at + kScoreKey.size();
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(first, line.data() + line.size(), v);
        if (ec == std::errc{}) pending_score = v;
      }
      continue;
    }
    if (line.starts_with("LABEL: ")) {
      out.push_back({std::string(trim(line.substr(7))), pending_score});
      pending_score = 0.0;
    }
  }
  return out;
}

std::string modal_label(std::span<const LabeledSampleRef> samples) {
  if (samples.empty()) throw Error(ErrorCode::EmptyContexts, "no labeled samples");
  std::map<std::string, std::pair<std::size_t, double>> tally;
  for (const auto& s : samples) {
    auto& [count, total] = tally[s.label];
    ++count;
    total += s.fused_score;
  }
  // std::map iterates labels ascending, so strict comparisons keep the smaller label on full ties.
  auto best = tally.begin();
  for (auto it = std::next(tally.begin()); it != tally.end(); ++it) {
    const auto& [count, total] = it->second;
    const auto& [best_count, best_total] = best->second;
    if (count > best_count || (count == best_count && total > best_total)) best = it;
  }
  return best->first;
}

std::string MockMajorityClient::complete(std::string_view system, std::string_view user) {
  const auto samples = parse_labeled_samples(user);
  std::string reply;
  if (samples.empty()) {
    reply = "label: unknown\nNo labeled samples were provided.";
  } else {
    const std::string label = modal_label(samples);
    const auto votes = std::count_if(samples.begin(), samples.end(),
                                     [&](const auto& s) { return s.label == label; });
    reply = "label: " + label + "\nMost retrieved samples (" + std::to_string(votes) + " of " +
            std::to_string(samples.size()) + ") carry this label.";
  }
  if (usage_) {
    usage_->record({RequestKind::Chat, provider_id(), true, system.size() + user.size(), reply.size(),
                    "classify"});
  }
  return reply;
}

VoteResult retrieve_only_classify(std::span<const RetrievalContext> contexts, double threshold) {
  if (contexts.empty()) throw Error(ErrorCode::EmptyContexts, "no retrieved contexts");
  if (!(threshold >= -1.0 && threshold <= 1.0)) {
    throw Error(ErrorCode::ConfigInvalid, "threshold must lie in [-1, 1]");
  }
  std::vector<LabeledSampleRef> kept;
  for (const auto& c : contexts) {
    if (c.fused_score >= threshold) kept.push_back({c.label, c.fused_score});
  }
  VoteResult out;
  out.kept = kept.size();
  if (kept.empty()) {
    std::vector<LabeledSampleRef> all;
    for (const auto& c : contexts) all.push_back({c.label, c.fused_score});
    out.label = modal_label(all);
    out.abstain_fallback = true;
    return out;
  }
  out.label = modal_label(kept);
  return out;
}

}  // namespace statrag
