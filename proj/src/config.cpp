#include "statrag/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "statrag/error.hpp"

namespace statrag {

namespace {

using nlohmann::json;

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::ConfigInvalid, msg); }

// Reads one JSON object, remembering which keys were consumed so that
// leftovers can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) invalid(where_ + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& at(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      invalid(path(key) + ": " + e.what());
    }
  }

  void get_size(const std::string& key, std::size_t& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) invalid(path(key) + ": expected a non-negative integer");
    out = v.get<std::size_t>();
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (seen_.contains(key)) continue;
      if (key == "api_key" || key == "key") {
        invalid(path(key) + ": API keys are read from the environment; name the variable with api_key_env");
      }
      invalid(path(key) + ": unknown key");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

ProviderKind provider_kind_from_string(const std::string& s) {
  for (auto k : {ProviderKind::RemoteHttp, ProviderKind::LocalDeterministic, ProviderKind::LocalTextHash}) {
    if (to_string(k) == s) return k;
  }
  invalid("unknown embedding provider '" + s + "'");
}

MissingScorePolicy missing_policy_from_string(const std::string& s) {
  if (s == "zero_fill") return MissingScorePolicy::ZeroFill;
  if (s == "rescore") return MissingScorePolicy::Rescore;
  invalid("unknown missing_scores policy '" + s + "'");
}

std::string_view to_string(MissingScorePolicy p) { return p == MissingScorePolicy::ZeroFill ? "zero_fill" : "rescore"; }

TextMode text_mode_from_string(const std::string& s) {
  if (s == "template") return TextMode::Template;
  if (s == "descriptor") return TextMode::Descriptor;
  invalid("unknown text_mode '" + s + "'");
}

void read_llm(const json& j, const std::string& where, LlmClientConfig& c) {
  ObjectReader r(j, where);
  if (r.has("kind")) c.kind = llm_kind_from_string(r.at("kind").get<std::string>());
  r.get("endpoint_url", c.endpoint_url);
  r.get("api_key_env", c.api_key_env_var);
  r.get("model", c.model_name);
  r.get("temperature", c.temperature);
  r.get("seed", c.seed);
  r.get("max_retries", c.max_retries);
  r.get("backoff_base_ms", c.backoff_base_ms);
  r.get("timeout_ms", c.timeout_ms);
  r.get_size("concurrency", c.concurrency);
  r.get("echo_reply", c.echo_reply);
  r.finish();
}

json llm_to_json(const LlmClientConfig& c) {
  return {{"kind", to_string(c.kind)},
          {"endpoint_url", c.endpoint_url},
          {"api_key_env", c.api_key_env_var},
          {"model", c.model_name},
          {"temperature", c.temperature},
          {"seed", c.seed},
          {"max_retries", c.max_retries},
          {"backoff_base_ms", c.backoff_base_ms},
          {"timeout_ms", c.timeout_ms},
          {"concurrency", c.concurrency},
          {"echo_reply", c.echo_reply}};
}

void read_dataset(const json& j, DatasetConfig& d) {
  ObjectReader r(j, "dataset");
  if (r.has("source")) {
    const auto s = r.at("source").get<std::string>();
    if (s == "csv") {
      d.source = DatasetConfig::Source::Csv;
    } else if (s == "synthetic") {
      d.source = DatasetConfig::Source::Synthetic;
    } else {
      invalid("dataset.source: expected csv or synthetic");
    }
  }
  if (r.has("indexing_path")) d.indexing_path = r.at("indexing_path").get<std::string>();
  if (r.has("validation_path")) d.validation_path = r.at("validation_path").get<std::string>();
  if (r.has("test_path")) d.test_path = r.at("test_path").get<std::string>();
  r.get("channels", d.schema.channel_columns);
  r.get("label_column", d.schema.label_column);
  r.get("subject_column", d.schema.subject_column);
  r.get("sampling_rate_hz", d.schema.sampling_rate_hz);
  r.get_size("window_len", d.schema.window_len);
  r.get_size("step", d.schema.step);
  if (r.has("synthetic")) {
    ObjectReader s(r.at("synthetic"), "dataset.synthetic");
    s.get_size("classes", d.synth_classes);
    s.get_size("windows_per_class", d.synth_windows_per_class);
    s.get_size("channels", d.synth_channels);
    s.get_size("window_len", d.synth_window_len);
    s.get("seed", d.synth_seed);
    s.get("validation", d.synth_validation);
    s.finish();
  }
  r.finish();
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

}  // namespace

EngineConfig::EngineConfig() {
  optimizer_llm.kind = LlmKind::MockTemplates;
  describer_llm.kind = LlmKind::MockDescriptor;
  openset.label_llm.kind = LlmKind::MockEcho;
  openset.label_llm.echo_reply = "unknown activity";
}

void EngineConfig::validate() const {
  if (dataset.source == DatasetConfig::Source::Csv) {
    dataset.schema.validate();
    if (dataset.indexing_path.empty()) invalid("dataset.indexing_path is required for csv datasets");
  } else {
    if (dataset.synth_classes < 1 || dataset.synth_windows_per_class < 1 || dataset.synth_channels < 1) {
      invalid("dataset.synthetic: classes, windows_per_class and channels must be >= 1");
    }
    if (dataset.synth_window_len < 4) invalid("dataset.synthetic.window_len must be >= 4");
  }
  pipeline.validate();
  embedding.validate();
  llm.validate();
  optimizer_llm.validate();
  describer_llm.validate();
  optimizer.validate();
  if (!(openset.openness > 0.0 && openset.openness < 1.0)) invalid("openset.openness must be in (0, 1)");
  if (!(openset.test_fraction > 0.0) || !(openset.validation_fraction >= 0.0) ||
      openset.test_fraction + openset.validation_fraction >= 1.0) {
    invalid("openset fractions must be >= 0, test > 0, and sum below 1");
  }
  if (openset.generate_labels) openset.label_llm.validate();
  if (!channels.empty() && channels.size() != channel_names().size()) {
    invalid("channels: " + std::to_string(channels.size()) + " entries for " +
            std::to_string(channel_names().size()) + " sensor channels");
  }
  if (rates) {
    for (double v : {rates->embedding_per_1k, rates->llm_input_per_1k, rates->llm_output_per_1k}) {
      if (!(v >= 0.0)) invalid("cost_rates must be >= 0");
    }
  }
}

std::vector<std::string> EngineConfig::channel_names() const {
  if (dataset.source == DatasetConfig::Source::Csv) return dataset.schema.channel_columns;
  return synth_channel_names(dataset.synth_channels);
}

SensorConfig EngineConfig::sensor_config() const {
  const double rate = dataset.source == DatasetConfig::Source::Csv ? dataset.schema.sampling_rate_hz : 50.0;
  if (channels.empty()) return SensorConfig::from_names(channel_names(), rate);
  return SensorConfig{rate, channels};
}

void EngineConfig::apply_seed(std::uint64_t s) {
  seed = s;
  optimizer.seed = s;
  optimizer_llm.seed = s;
  llm.seed = s;
}

EngineConfig parse_engine_config(const json& j) {
  EngineConfig c;
  ObjectReader r(j, "config");
  if (r.has("dataset")) read_dataset(r.at("dataset"), c.dataset);
  r.get("normalize", c.normalize);
  r.get_size("jobs", c.pipeline.jobs);

  if (r.has("retrieval")) {
    ObjectReader s(r.at("retrieval"), "retrieval");
    if (s.has("weights")) {
      std::vector<double> w;
      s.get("weights", w);
      if (w.size() != kSubsegments) invalid("retrieval.weights: expected 4 values");
      std::copy(w.begin(), w.end(), c.pipeline.weights.w.begin());
    }
    s.get_size("p", c.pipeline.p);
    s.get_size("q", c.pipeline.q);
    s.get("threshold", c.pipeline.threshold);
    if (s.has("missing_scores")) c.pipeline.missing_scores = missing_policy_from_string(s.at("missing_scores").get<std::string>());
    if (s.has("text_mode")) c.pipeline.text_mode = text_mode_from_string(s.at("text_mode").get<std::string>());
    s.get_size("sample_budget", c.pipeline.sample_budget);
    s.get("instruction", c.pipeline.instruction);
    s.finish();
  }

  if (r.has("embedding")) {
    ObjectReader s(r.at("embedding"), "embedding");
    auto& e = c.embedding;
    if (s.has("provider")) e.kind = provider_kind_from_string(s.at("provider").get<std::string>());
    s.get("endpoint_url", e.endpoint_url);
    s.get("api_key_env", e.api_key_env_var);
    s.get("model", e.model_name);
    s.get_size("dimension", e.dimension);
    s.get_size("batch_size", e.batch_size);
    s.get("max_retries", e.max_retries);
    s.get("backoff_base_ms", e.backoff_base_ms);
    s.get("timeout_ms", e.timeout_ms);
    s.get_size("max_text_chars", e.max_text_chars);
    s.get_size("concurrency", e.concurrency);
    s.finish();
  }

  if (r.has("llm")) read_llm(r.at("llm"), "llm", c.llm);
  if (r.has("optimizer_llm")) read_llm(r.at("optimizer_llm"), "optimizer_llm", c.optimizer_llm);
  if (r.has("describer_llm")) read_llm(r.at("describer_llm"), "describer_llm", c.describer_llm);

  if (r.has("optimizer")) {
    ObjectReader s(r.at("optimizer"), "optimizer");
    auto& o = c.optimizer;
    s.get_size("initial_candidates", o.initial_candidates);
    s.get_size("selected_per_iteration", o.selected_per_iteration);
    s.get("max_iterations", o.max_iterations);
    s.get("patience", o.patience);
    s.get_size("exemplar_count", o.exemplar_count);
    if (s.has("schedule")) {
      const auto v = s.at("schedule").get<std::vector<int>>();
      if (v.size() != 2) invalid("optimizer.schedule: expected [exploration_end, combination_end]");
      o.schedule = PhaseSchedule{v[0], v[1]};
    }
    s.get("validation_fraction", o.validation_fraction);
    s.get("run_id", o.run_id);
    s.finish();
  }

  if (r.has("openset")) {
    ObjectReader s(r.at("openset"), "openset");
    auto& o = c.openset;
    s.get("openness", o.openness);
    if (s.has("mode")) o.mode = label_mode_from_string(s.at("mode").get<std::string>());
    s.get("include_placeholder", o.include_placeholder);
    s.get("test_fraction", o.test_fraction);
    s.get("validation_fraction", o.validation_fraction);
    s.get("generate_labels", o.generate_labels);
    if (s.has("label_llm")) read_llm(s.at("label_llm"), "openset.label_llm", o.label_llm);
    s.finish();
  }

  if (r.has("channels")) {
    const auto& arr = r.at("channels");
    if (!arr.is_array()) invalid("channels: expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      ObjectReader s(arr[i], "channels[" + std::to_string(i) + "]");
      ChannelConfig ch;
      s.get("name", ch.name);
      s.get("placement", ch.placement);
      s.get("orientation", ch.orientation);
      s.get("axis_mapping", ch.axis_mapping);
      s.finish();
      c.channels.push_back(std::move(ch));
    }
  }

  if (r.has("cost_rates")) {
    ObjectReader s(r.at("cost_rates"), "cost_rates");
    CostRates rates;
    s.get("embedding_per_1k", rates.embedding_per_1k);
    s.get("llm_input_per_1k", rates.llm_input_per_1k);
    s.get("llm_output_per_1k", rates.llm_output_per_1k);
    s.finish();
    c.rates = rates;
  }

  if (r.has("seed")) {
    std::uint64_t s = 0;
    r.get("seed", s);
    c.apply_seed(s);
  }
  r.finish();
  c.validate();
  return c;
}

EngineConfig load_engine_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(slurp(path));
  } catch (const json::parse_error& e) {
    invalid(path.string() + ": " + e.what());
  }
  return parse_engine_config(j);
}

json engine_config_to_json(const EngineConfig& c) {
  const auto& d = c.dataset;
  json dataset = {{"source", d.source == DatasetConfig::Source::Csv ? "csv" : "synthetic"},
                  {"indexing_path", d.indexing_path.string()},
                  {"channels", d.schema.channel_columns},
                  {"label_column", d.schema.label_column},
                  {"subject_column", d.schema.subject_column},
                  {"sampling_rate_hz", d.schema.sampling_rate_hz},
                  {"window_len", d.schema.window_len},
                  {"step", d.schema.step},
                  {"synthetic",
                   {{"classes", d.synth_classes},
                    {"windows_per_class", d.synth_windows_per_class},
                    {"channels", d.synth_channels},
                    {"window_len", d.synth_window_len},
                    {"seed", d.synth_seed},
                    {"validation", d.synth_validation}}}};
  if (d.validation_path) dataset["validation_path"] = d.validation_path->string();
  if (d.test_path) dataset["test_path"] = d.test_path->string();

  const auto& p = c.pipeline;
  const auto& e = c.embedding;
  const auto& o = c.optimizer;
  json out = {
      {"seed", c.seed},
      {"jobs", p.jobs},
      {"normalize", c.normalize},
      {"dataset", dataset},
      {"retrieval",
       {{"weights", p.weights.w},
        {"p", p.p},
        {"q", p.q},
        {"threshold", p.threshold},
        {"missing_scores", to_string(p.missing_scores)},
        {"text_mode", to_string(p.text_mode)},
        {"sample_budget", p.sample_budget},
        {"instruction", p.instruction}}},
      {"embedding",
       {{"provider", to_string(e.kind)},
        {"endpoint_url", e.endpoint_url},
        {"api_key_env", e.api_key_env_var},
        {"model", e.model_name},
        {"dimension", e.dimension},
        {"batch_size", e.batch_size},
        {"max_retries", e.max_retries},
        {"backoff_base_ms", e.backoff_base_ms},
        {"timeout_ms", e.timeout_ms},
        {"max_text_chars", e.max_text_chars},
        {"concurrency", e.concurrency}}},
      {"llm", llm_to_json(c.llm)},
      {"optimizer_llm", llm_to_json(c.optimizer_llm)},
      {"describer_llm", llm_to_json(c.describer_llm)},
      {"optimizer",
       {{"initial_candidates", o.initial_candidates},
        {"selected_per_iteration", o.selected_per_iteration},
        {"max_iterations", o.max_iterations},
        {"patience", o.patience},
        {"exemplar_count", o.exemplar_count},
        {"validation_fraction", o.validation_fraction},
        {"run_id", o.run_id}}},
      {"openset",
       {{"openness", c.openset.openness},
        {"mode", to_string(c.openset.mode)},
        {"include_placeholder", c.openset.include_placeholder},
        {"test_fraction", c.openset.test_fraction},
        {"validation_fraction", c.openset.validation_fraction},
        {"generate_labels", c.openset.generate_labels},
        {"label_llm", llm_to_json(c.openset.label_llm)}}}};
  if (o.schedule) out["optimizer"]["schedule"] = {o.schedule->exploration_end, o.schedule->combination_end};
  if (!c.channels.empty()) {
    out["channels"] = json::array();
    for (const auto& ch : c.channels) {
      out["channels"].push_back(
          {{"name", ch.name}, {"placement", ch.placement}, {"orientation", ch.orientation}, {"axis_mapping", ch.axis_mapping}});
    }
  }
  if (c.rates) {
    out["cost_rates"] = {{"embedding_per_1k", c.rates->embedding_per_1k},
                         {"llm_input_per_1k", c.rates->llm_input_per_1k},
                         {"llm_output_per_1k", c.rates->llm_output_per_1k}};
  }
  return out;
}

DatasetSplits load_splits(const DatasetConfig& config) {
  DatasetSplits out;
  if (config.source == DatasetConfig::Source::Synthetic) {
    auto all = synth_dataset(config.synth_classes, config.synth_windows_per_class, config.synth_channels,
                             config.synth_window_len, config.synth_seed);
    for (auto& w : all) {
      const auto slot = w.segment_id % 5;
      if (slot == 4) {
        w.source_role = SourceRole::Test;
        out.test.push_back(std::move(w));
      } else if (slot == 3 && config.synth_validation) {
        w.source_role = SourceRole::Validation;
        out.validation.push_back(std::move(w));
      } else {
        out.indexing.push_back(std::move(w));
      }
    }
    return out;
  }
  // Segment ids continue across files so they stay unique within a run.
  std::int64_t next = 0;
  auto load = [&](const std::filesystem::path& path, SourceRole role) {
    const auto runs = load_dataset(path, config.schema);
    auto windows = window_runs(runs, config.schema, next, role);
    next += static_cast<std::int64_t>(windows.size());
    return windows;
  };
  out.indexing = load(config.indexing_path, SourceRole::Indexing);
  if (config.validation_path) out.validation = load(*config.validation_path, SourceRole::Validation);
  if (config.test_path) out.test = load(*config.test_path, SourceRole::Test);
  return out;
}

void save_normalization(const NormalizationStats& stats, const std::filesystem::path& path) {
  json j = {{"mean", stats.mean}, {"stddev", stats.stddev}};
  write_text(path, j.dump(2) + "\n");
}

NormalizationStats load_normalization(const std::filesystem::path& path) {
  try {
    const auto j = json::parse(slurp(path));
    NormalizationStats s;
    s.mean = j.at("mean").get<std::vector<double>>();
    s.stddev = j.at("stddev").get<std::vector<double>>();
    if (s.mean.size() != s.stddev.size()) invalid(path.string() + ": mean/stddev length mismatch");
    return s;
  } catch (const json::exception& e) {
    invalid(path.string() + ": " + e.what());
  }
}

json usage_to_json(const UsageRecord& r) {
  return {{"kind", r.kind == RequestKind::Chat ? "chat" : "embedding"},
          {"provider", r.provider_id},
          {"local", r.local},
          {"chars_in", r.chars_in},
          {"chars_out", r.chars_out},
          {"purpose", r.purpose}};
}

UsageRecord usage_from_json(const json& j) {
  UsageRecord r;
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind != "chat" && kind != "embedding") invalid("usage record kind '" + kind + "'");
    r.kind = kind == "chat" ? RequestKind::Chat : RequestKind::Embedding;
    r.provider_id = j.at("provider").get<std::string>();
    r.local = j.at("local").get<bool>();
    r.chars_in = j.at("chars_in").get<std::size_t>();
    r.chars_out = j.value("chars_out", std::size_t{0});
    r.purpose = j.value("purpose", std::string{});
  } catch (const json::exception& e) {
    invalid(std::string("usage record: ") + e.what());
  }
  return r;
}

void save_usage(std::span<const UsageRecord> log, const std::filesystem::path& path) {
  std::string text;
  for (const auto& r : log) text += usage_to_json(r).dump() + "\n";
  write_text(path, text);
}

std::vector<UsageRecord> load_usage(const std::filesystem::path& path) {
  std::istringstream in(slurp(path));
  std::vector<UsageRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(usage_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      invalid(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void write_windows_csv(std::span<const SensorWindow> windows, std::span<const std::string> channel_names,
                       const std::filesystem::path& path) {
  std::ostringstream os;
  os.precision(17);
  os << "subject,label";
  for (const auto& c : channel_names) os << ',' << c;
  os << '\n';
  for (const auto& w : windows) {
    if (w.samples.channel_count() != channel_names.size()) {
      throw Error(ErrorCode::ChannelCountMismatch, "window " + std::to_string(w.segment_id));
    }
    for (std::size_t t = 0; t < w.length(); ++t) {
      os << w.subject_id << ',' << w.label.value_or("");
      for (const auto& ch : w.samples.channels) os << ',' << ch[t];
      os << '\n';
    }
  }
  write_text(path, os.str());
}

}  // namespace statrag
