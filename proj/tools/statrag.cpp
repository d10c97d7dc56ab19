// statrag: command-line front end for indexing, classification and the
// evaluation protocols.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "statrag/config.hpp"
#include "statrag/error.hpp"
#include "statrag/http.hpp"
#include "statrag/parallel.hpp"

namespace fs = std::filesystem;
using namespace statrag;
using nlohmann::json;

namespace {

// Exit codes.
constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitProvider = 4;
constexpr int kExitRefused = 5;

struct Refused : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigInvalid:
    case ErrorCode::InvalidSchema:
    case ErrorCode::InvalidWeights:
    case ErrorCode::UnknownClass:
    case ErrorCode::TooFewClasses:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::ModeMismatch:
      return kExitConfig;
    case ErrorCode::IoError:
    case ErrorCode::CorruptStore:
    case ErrorCode::EmptyFile:
    case ErrorCode::MissingColumn:
    case ErrorCode::NonNumericValue:
    case ErrorCode::ChannelCountMismatch:
      return kExitIo;
    case ErrorCode::ProviderUnavailable:
    case ErrorCode::AuthMissing:
    case ErrorCode::Timeout:
      return kExitProvider;
    default:
      return kExitFailure;
  }
}

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  bool dry_run = false;
  bool force = false;
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

void refuse_existing(const fs::path& path, const Globals& g) {
  if (fs::exists(path) && !g.force) {
    throw Refused(path.string() + " already exists; pass --force to overwrite");
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

fs::path norm_sidecar(const fs::path& store) { return fs::path(store.string() + ".norm.json"); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

EngineConfig load_config(const Globals& g) {
  if (g.config_path.empty()) throw Error(ErrorCode::ConfigInvalid, "--config is required for this command");
  auto cfg = load_engine_config(g.config_path);
  if (g.seed) cfg.apply_seed(*g.seed);
  if (g.jobs) cfg.pipeline.jobs = *g.jobs;
  cfg.validate();
  return cfg;
}

// Validates without spending: keys must be present and endpoints must answer.
int dry_run(const EngineConfig& cfg) {
  auto check_remote = [](const std::string& what, const std::string& url, const std::string& env) {
    (void)read_api_key(env);
    if (!http_reachable(url, std::chrono::milliseconds(5000))) {
      throw Error(ErrorCode::ProviderUnavailable, what + " endpoint unreachable: " + url);
    }
    std::cout << what << ": " << url << " reachable, key in $" << env << "\n";
  };
  if (cfg.embedding.kind == ProviderKind::RemoteHttp) {
    check_remote("embedding", cfg.embedding.endpoint_url, cfg.embedding.api_key_env_var);
  }
  for (const auto& [what, c] : {std::pair{"llm", &cfg.llm}, std::pair{"optimizer_llm", &cfg.optimizer_llm},
                                std::pair{"describer_llm", &cfg.describer_llm}}) {
    if (c->kind == LlmKind::RemoteChat) check_remote(what, c->endpoint_url, c->api_key_env_var);
  }
  if (cfg.dataset.source == DatasetConfig::Source::Csv) {
    for (const auto& p : {std::optional{cfg.dataset.indexing_path}, cfg.dataset.validation_path, cfg.dataset.test_path}) {
      if (p && !fs::exists(*p)) throw Error(ErrorCode::IoError, "dataset file missing: " + p->string());
    }
  }
  std::cout << "config ok\n";
  return kExitOk;
}

struct Engine {
  std::shared_ptr<UsageLog> usage = std::make_shared<UsageLog>();
  std::unique_ptr<Pipeline> pipeline;
};

Engine make_engine(const EngineConfig& cfg, bool descriptor_mode) {
  Engine e;
  auto opts = cfg.pipeline;
  if (descriptor_mode) opts.text_mode = TextMode::Descriptor;
  std::shared_ptr<Embedder> embedder = make_embedder(cfg.embedding, e.usage);
  std::shared_ptr<LlmClient> llm = make_llm_client(cfg.llm, e.usage, "classify");
  e.pipeline = std::make_unique<Pipeline>(cfg.channel_names(), embedder, llm, opts);
  if (opts.text_mode == TextMode::Descriptor) {
    e.pipeline->set_describer(make_llm_client(cfg.describer_llm, e.usage, "describe"), cfg.sensor_config());
  }
  return e;
}

// --- index / describe-index ---

int cmd_index(const Globals& g, const fs::path& store_path, bool descriptors) {
  const auto cfg = load_config(g);
  if (g.dry_run) return dry_run(cfg);
  refuse_existing(store_path, g);
  const auto t0 = std::chrono::steady_clock::now();
  const auto splits = load_splits(cfg.dataset);
  auto engine = make_engine(cfg, descriptors);
  auto& p = *engine.pipeline;
  if (cfg.normalize) p.fit_normalization(splits.indexing);
  p.index(splits.indexing);
  save_store(p.store(), store_path);
  if (p.normalization()) {
    save_normalization(*p.normalization(), norm_sidecar(store_path));
  } else {
    std::error_code ec;
    fs::remove(norm_sidecar(store_path), ec);
  }
  const json summary = {{"store", store_path.string()},
                        {"text_mode", to_string(p.store().mode().value_or(TextMode::Template))},
                        {"segments", p.store().segment_count()},
                        {"records", p.store().record_count()},
                        {"labels", p.label_set()},
                        {"dimension", p.store().dimension()},
                        {"wall_seconds", seconds_since(t0)}};
  std::cout << summary.dump(2) << "\n";
  return kExitOk;
}

// --- classify ---

int cmd_classify(const Globals& g, const fs::path& store_path, const std::string& input, const std::string& out) {
  const auto cfg = load_config(g);
  if (g.dry_run) return dry_run(cfg);
  if (!out.empty()) refuse_existing(out, g);

  auto store = std::make_shared<VectorStore>(load_store(store_path));
  const bool descriptors = store->mode() == TextMode::Descriptor;
  auto engine = make_engine(cfg, descriptors);
  auto& p = *engine.pipeline;
  p.set_store(store);
  if (fs::exists(norm_sidecar(store_path))) p.set_normalization(load_normalization(norm_sidecar(store_path)));

  std::vector<SensorWindow> windows;
  if (!input.empty()) {
    const auto runs = load_dataset(input, cfg.dataset.schema);
    // Number the new windows after the indexed ones so ids stay unambiguous.
    std::int64_t next = 0;
    for (const auto& r : store->records()) next = std::max(next, r.segment_id + 1);
    windows = window_runs(runs, cfg.dataset.schema, next, SourceRole::Test);
  } else {
    windows = load_splits(cfg.dataset).test;
  }
  if (windows.empty()) throw Error(ErrorCode::InsufficientData, "no windows to classify");
  if (cfg.pipeline.q > store->segment_count()) {
    std::cerr << "warning: q=" << cfg.pipeline.q << " exceeds the " << store->segment_count()
              << " indexed segments; all segments are used\n";
  }

  const auto results = parallel_map(windows.size(), cfg.pipeline.jobs, [&](std::size_t i) { return p.classify(windows[i]); });
  std::string lines;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    json ctx = json::array();
    for (const auto& c : r.contexts) ctx.push_back({{"segment_id", c.segment_id}, {"label", c.label}, {"fused_score", c.fused_score}});
    json line = {{"segment_id", r.segment_id},
                 {"subject", windows[i].subject_id},
                 {"label", r.prediction.label},
                 {"parse_status", to_string(r.prediction.parse_status)},
                 {"contexts", ctx}};
    if (windows[i].label) line["truth"] = *windows[i].label;
    lines += line.dump() + "\n";
  }
  if (out.empty()) {
    std::cout << lines;
  } else {
    write_file(out, lines);
    std::cerr << results.size() << " predictions written to " << out << "\n";
  }
  return kExitOk;
}

// --- evaluate ---

int cmd_evaluate(const Globals& g, const fs::path& out_dir) {
  const auto cfg = load_config(g);
  if (g.dry_run) return dry_run(cfg);
  refuse_existing(out_dir / "report.json", g);
  const auto splits = load_splits(cfg.dataset);
  if (splits.test.empty()) throw Error(ErrorCode::ConfigInvalid, "evaluate needs test windows");
  auto engine = make_engine(cfg, false);
  BenchmarkOptions opts;
  opts.fit_normalization = cfg.normalize;
  opts.usage = engine.usage;
  opts.rates = cfg.rates;
  const auto report = run_benchmark(*engine.pipeline, splits.indexing, splits.test, opts);
  ensure_dir(out_dir);
  write_file(out_dir / "report.json", report.to_json().dump(2) + "\n");
  write_file(out_dir / "report.txt", report.to_text());
  write_file(out_dir / "confusion.csv", report.confusion_csv());
  save_usage(engine.usage->snapshot(), out_dir / "usage.jsonl");
  std::cout << report.to_text();
  return kExitOk;
}

// --- optimize-prompt ---

int cmd_optimize(const Globals& g, const fs::path& out_dir) {
  auto cfg = load_config(g);
  if (g.dry_run) return dry_run(cfg);
  const auto splits = load_splits(cfg.dataset);
  if (splits.validation.empty()) {
    throw Error(ErrorCode::ConfigInvalid, "optimize-prompt needs validation windows (validation_path or synthetic.validation)");
  }
  const auto log_file = out_dir / optimizer_log_filename(cfg.optimizer.run_id, cfg.optimizer.seed);
  refuse_existing(log_file, g);
  ensure_dir(out_dir);
  std::error_code ec;
  fs::remove(log_file, ec);

  auto engine = make_engine(cfg, false);
  auto& p = *engine.pipeline;
  if (cfg.normalize) p.fit_normalization(splits.indexing);
  p.index(splits.indexing);
  auto generator = make_llm_client(cfg.optimizer_llm, engine.usage, "optimize");
  cfg.optimizer.log_dir = out_dir;
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = optimize(cfg.optimizer, *generator, p, splits.validation);

  write_file(out_dir / "best_instruction.txt", result.best.instruction_text + "\n");
  save_usage(engine.usage->snapshot(), out_dir / "usage.jsonl");
  const json summary = {{"best_id", result.best.id},
                        {"best_fitness", result.best.fitness.value_or(0.0)},
                        {"iterations", result.log.iterations.size()},
                        {"evaluations", result.evaluations},
                        {"stopped_by_patience", result.stopped_by_patience},
                        {"log", log_file.string()},
                        {"wall_seconds", seconds_since(t0)}};
  write_file(out_dir / "summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return kExitOk;
}

// --- openset ---

int cmd_openset(const Globals& g, std::optional<double> openness, const std::string& mode, const std::string& leave_out,
                const fs::path& out) {
  auto cfg = load_config(g);
  if (openness) cfg.openset.openness = *openness;
  if (!mode.empty()) cfg.openset.mode = label_mode_from_string(mode);
  cfg.validate();
  if (g.dry_run) return dry_run(cfg);
  if (!out.empty()) refuse_existing(out, g);

  auto splits = load_splits(cfg.dataset);
  std::vector<SensorWindow> pool = std::move(splits.indexing);
  for (auto* part : {&splits.validation, &splits.test}) std::move(part->begin(), part->end(), std::back_inserter(pool));

  SplitFractions fractions;
  fractions.test = cfg.openset.test_fraction;
  fractions.validation = cfg.openset.validation_fraction;
  const auto split = leave_out.empty() ? make_openset_split(pool, cfg.openset.openness, cfg.seed, fractions)
                                       : leave_one_class_out(pool, leave_out);

  auto engine = make_engine(cfg, false);
  OpenSetRunOptions opts;
  opts.mode = {cfg.openset.mode};
  opts.include_placeholder = cfg.openset.include_placeholder;
  std::unique_ptr<LlmClient> namer;
  std::unique_ptr<Embedder> label_embedder;
  if (cfg.openset.generate_labels) {
    namer = make_llm_client(cfg.openset.label_llm, engine.usage, "label");
    // Label strings carry no numbers, so the numeric local embedder cannot compare them.
    if (cfg.embedding.kind == ProviderKind::RemoteHttp) {
      label_embedder = make_embedder(cfg.embedding, engine.usage);
    } else {
      label_embedder = std::make_unique<TextHashEmbedder>(256, engine.usage);
    }
    opts.label_client = namer.get();
    opts.label_embedder = label_embedder.get();
  }
  const auto report = run_openset(*engine.pipeline, pool, split, opts);
  const auto text = report.to_json().dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file(out, text);
    std::cerr << "open-set report written to " << out.string() << " (withheld " << split.withheld_classes.size()
              << " of " << split.withheld_classes.size() + split.known_classes.size() << " classes)\n";
  }
  return kExitOk;
}

// --- synth ---

int cmd_synth(const Globals& g, const fs::path& out_dir, std::size_t classes, std::size_t per_class,
              std::size_t channels, std::size_t length, bool validation) {
  if (g.dry_run) {
    std::cout << "would write " << classes * per_class << " windows to " << out_dir.string() << "\n";
    return kExitOk;
  }
  refuse_existing(out_dir / "config.json", g);
  ensure_dir(out_dir);
  DatasetConfig d;
  d.synth_classes = classes;
  d.synth_windows_per_class = per_class;
  d.synth_channels = channels;
  d.synth_window_len = length;
  d.synth_seed = g.seed.value_or(42);
  d.synth_validation = validation;
  const auto splits = load_splits(d);
  const auto names = synth_channel_names(channels);
  write_windows_csv(splits.indexing, names, out_dir / "indexing.csv");
  write_windows_csv(splits.test, names, out_dir / "test.csv");
  if (validation) write_windows_csv(splits.validation, names, out_dir / "validation.csv");

  // A runnable config over the files just written. step = L, so windowing
  // reproduces the generated windows exactly.
  json dataset = {{"source", "csv"},
                  {"indexing_path", fs::absolute(out_dir / "indexing.csv").string()},
                  {"test_path", fs::absolute(out_dir / "test.csv").string()},
                  {"channels", names},
                  {"window_len", length},
                  {"step", length}};
  if (validation) dataset["validation_path"] = fs::absolute(out_dir / "validation.csv").string();
  const json config = {{"seed", d.synth_seed}, {"dataset", dataset}};
  write_file(out_dir / "config.json", config.dump(2) + "\n");
  std::cout << "wrote " << splits.indexing.size() << " indexing, " << splits.validation.size() << " validation and "
            << splits.test.size() << " test windows to " << out_dir.string() << "\n";
  return kExitOk;
}

// --- cost-report ---

int cmd_cost_report(const Globals& g, const fs::path& usage_path, std::size_t predictions,
                    std::optional<double> embed_rate, std::optional<double> in_rate, std::optional<double> out_rate,
                    bool as_json) {
  CostRates rates;
  if (!g.config_path.empty()) {
    const auto cfg = load_config(g);
    if (cfg.rates) rates = *cfg.rates;
  }
  if (embed_rate) rates.embedding_per_1k = *embed_rate;
  if (in_rate) rates.llm_input_per_1k = *in_rate;
  if (out_rate) rates.llm_output_per_1k = *out_rate;
  if (g.dry_run) {
    std::cout << "config ok\n";
    return kExitOk;
  }
  const auto log = load_usage(usage_path);
  const auto ledger = replay_usage(log, rates, predictions);
  if (as_json) {
    std::cout << cost_report_json(ledger).dump(2) << "\n";
  } else {
    std::cout << cost_report(ledger);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"statrag: training-free retrieval-augmented activity recognition"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "Engine config (JSON)");
  app.add_option("--seed", g.seed, "Overrides every seed in the config");
  app.add_option("--jobs", g.jobs, "Worker threads for classification")->check(CLI::PositiveNumber);
  app.add_flag("--dry-run", g.dry_run, "Validate config and provider reachability, then exit");
  app.add_flag("--force", g.force, "Overwrite existing outputs");

  std::function<int()> run;

  auto* index = app.add_subcommand("index", "Build a vector store from the indexing windows");
  std::string store_path;
  index->add_option("--store", store_path, "Output store file")->required();
  index->callback([&] { run = [&] { return cmd_index(g, store_path, false); }; });

  auto* describe = app.add_subcommand("describe-index", "Build a store over LLM-written window descriptors");
  describe->add_option("--store", store_path, "Output store file")->required();
  describe->callback([&] { run = [&] { return cmd_index(g, store_path, true); }; });

  auto* classify = app.add_subcommand("classify", "Classify windows against a store; JSON lines out");
  std::string input, out;
  classify->add_option("--store", store_path, "Store file written by index")->required();
  classify->add_option("--input", input, "CSV to classify (default: the config's test split)");
  classify->add_option("--out", out, "Output file (default: stdout)");
  classify->callback([&] { run = [&] { return cmd_classify(g, store_path, input, out); }; });

  auto* evaluate = app.add_subcommand("evaluate", "Index, classify the test split and write reports");
  std::string out_dir;
  evaluate->add_option("--out", out_dir, "Report directory")->required();
  evaluate->callback([&] { run = [&] { return cmd_evaluate(g, out_dir); }; });

  auto* opt = app.add_subcommand("optimize-prompt", "Evolve the classification instruction on validation windows");
  opt->add_option("--out", out_dir, "Log directory")->required();
  opt->callback([&] { run = [&] { return cmd_optimize(g, out_dir); }; });

  auto* openset = app.add_subcommand("openset", "Open-set protocol with withheld classes");
  std::optional<double> openness;
  std::string mode, leave_out;
  openset->add_option("--openness", openness, "Fraction of classes to withhold");
  openset->add_option("--mode", mode, "hidden | available")->check(CLI::IsMember({"hidden", "available"}));
  openset->add_option("--leave-out", leave_out, "Withhold exactly this class");
  openset->add_option("--out", out, "Report file (default: stdout)");
  openset->callback([&] { run = [&] { return cmd_openset(g, openness, mode, leave_out, out); }; });

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset and a config that reads it");
  std::size_t classes = 3, per_class = 200, channels = 6, length = 40;
  bool with_validation = false;
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--classes", classes)->check(CLI::PositiveNumber);
  synth->add_option("--per-class", per_class)->check(CLI::PositiveNumber);
  synth->add_option("--channels", channels)->check(CLI::PositiveNumber);
  synth->add_option("--length", length)->check(CLI::Range(4, 100000));
  synth->add_flag("--validation", with_validation, "Also write a validation split");
  synth->callback([&] { run = [&] { return cmd_synth(g, out_dir, classes, per_class, channels, length, with_validation); }; });

  auto* cost = app.add_subcommand("cost-report", "Price a request log");
  std::string usage_path;
  std::size_t predictions = 0;
  std::optional<double> embed_rate, in_rate, out_rate;
  bool as_json = false;
  cost->add_option("--usage", usage_path, "usage.jsonl written by evaluate or optimize-prompt")->required();
  cost->add_option("--predictions", predictions, "Divisor for the per-sample cost")->required();
  cost->add_option("--embedding-per-1k", embed_rate);
  cost->add_option("--llm-input-per-1k", in_rate);
  cost->add_option("--llm-output-per-1k", out_rate);
  cost->add_flag("--json", as_json);
  cost->callback([&] { run = [&] { return cmd_cost_report(g, usage_path, predictions, embed_rate, in_rate, out_rate, as_json); }; });

  CLI11_PARSE(app, argc, argv);
  try {
    return run();
  } catch (const Refused& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRefused;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
