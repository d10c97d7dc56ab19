// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failures. Everything runs offline with local/mock providers.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <regex>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "statrag/error.hpp"
#include "statrag/eval.hpp"
#include "statrag/openset.hpp"
#include "statrag/optimize.hpp"
#include "statrag/random.hpp"

using namespace statrag;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

class Check {
 public:
  void expect(bool cond, const std::string& what) {
    if (!cond && out_.ok) {
      out_.ok = false;
      out_.detail = what;
    }
  }
  void note(const std::string& s) {
    if (out_.ok) out_.detail = s;
  }
  Outcome done() { return out_; }

 private:
  Outcome out_;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// 1. statistics oracle

struct OracleStats {
  double mean, max, min, q1, q3, stddev, median;
  std::size_t peaks;
};

double oracle_quantile(const std::vector<double>& sorted, double p) {
  const long double h = static_cast<long double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return static_cast<double>(sorted[lo] + (h - lo) * (static_cast<long double>(sorted[hi]) - sorted[lo]));
}

OracleStats oracle_stats(const std::vector<double>& x) {
  long double sum = 0;
  for (double v : x) sum += v;
  const long double mean = sum / x.size();
  long double ss = 0;
  for (double v : x) ss += (v - mean) * (v - mean);
  auto sorted = x;
  std::sort(sorted.begin(), sorted.end());
  std::size_t peaks = 0;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) peaks += x[i] > x[i - 1] && x[i] > x[i + 1];
  return {static_cast<double>(mean),
          sorted.back(),
          sorted.front(),
          oracle_quantile(sorted, 0.25),
          oracle_quantile(sorted, 0.75),
          static_cast<double>(std::sqrt(ss / x.size())),
          oracle_quantile(sorted, 0.5),
          peaks};
}

Outcome criterion_statistics() {
  Check c;
  Rng rng(20240601);
  double worst = 0;
  for (int seq = 0; seq < 1000; ++seq) {
    const std::size_t n = 1 + uniform_index(rng, 500);
    std::vector<double> x(n);
    const double scale = std::pow(10.0, static_cast<double>(uniform_index(rng, 7)) - 3.0);
    // Every fourth sequence is quantized so repeated values and plateaus occur.
    const bool coarse = seq % 4 == 0;
    for (auto& v : x) {
      v = (uniform01(rng) * 2.0 - 1.0) * scale;
      if (coarse) v = std::round(v * 4.0 / scale) * scale / 4.0;
    }
    const auto got = compute_stats(x);
    const auto want = oracle_stats(x);
    double magnitude = 0;
    for (double v : x) magnitude = std::max(magnitude, std::abs(v));
    const double tol = 1e-9 * std::max(magnitude, 1e-300);
    const std::pair<double, double> pairs[] = {{got.mean, want.mean},     {got.max, want.max},
                                               {got.min, want.min},       {got.q1, want.q1},
                                               {got.q3, want.q3},         {got.stddev, want.stddev},
                                               {got.median, want.median}};
    for (const auto& [g, w] : pairs) {
      const double err = std::abs(g - w);
      worst = std::max(worst, err / std::max(magnitude, 1e-300));
      c.expect(err <= tol, "sequence " + std::to_string(seq) + ": " + fmt(g, 17) + " vs " + fmt(w, 17));
    }
    c.expect(got.n_peaks == want.peaks, "peak count mismatch in sequence " + std::to_string(seq));
  }
  c.note("1000 sequences, worst relative error " + fmt(worst, 3));
  return c.done();
}

// ---------------------------------------------------------------------------
// 2. partitions and sliding windows

Outcome criterion_windowing() {
  Check c;
  for (std::size_t L = 4; L <= 1000; ++L) {
    SensorWindow w;
    w.samples.channels = {std::vector<double>(L, 0.0)};
    const auto pw = partition_window(w);
    c.expect(pw.slice(Scope::Full) == ScopeSlice{0, L}, "Full != [0,L) at L=" + std::to_string(L));
    const auto& s = pw.slice(Scope::Start);
    const auto& m = pw.slice(Scope::Mid);
    const auto& e = pw.slice(Scope::End);
    const bool tiles = s.begin == 0 && s.end == m.begin && m.end == e.begin && e.end == L;
    const bool nonempty = s.size() > 0 && m.size() > 0 && e.size() > 0;
    c.expect(tiles && nonempty, "sub-partitions do not tile at L=" + std::to_string(L));
    c.expect(s.end == L / 3 && m.end == 2 * L / 3, "cut points at L=" + std::to_string(L));
  }
  Rng rng(77);
  for (int t = 0; t < 200; ++t) {
    const std::size_t len = 1 + uniform_index(rng, 3000);
    const std::size_t L = 4 + uniform_index(rng, 400);
    const std::size_t D = 1 + uniform_index(rng, 2 * L);
    MultiSeries series;
    series.channels.assign(2, std::vector<double>(len));
    for (std::size_t i = 0; i < len; ++i) series.channels[0][i] = series.channels[1][i] = static_cast<double>(i);
    const std::size_t expected = len < L ? 0 : (len - L) / D + 1;
    std::vector<SensorWindow> windows;
    try {
      windows = slide_windows(series, L, D, "s", std::string("a"));
    } catch (const statrag::Error& e) {
      c.expect(expected == 0, "unexpected error: " + std::string(e.what()));
      continue;
    }
    c.expect(windows.size() == expected, "count " + std::to_string(windows.size()) + " != " + std::to_string(expected) +
                                             " for (len,L,D)=(" + std::to_string(len) + "," + std::to_string(L) + "," +
                                             std::to_string(D) + ")");
    for (std::size_t i = 0; i < windows.size(); ++i) {
      const auto& ch = windows[i].samples.channels[0];
      c.expect(ch.size() == L && ch.front() == static_cast<double>(i * D), "window content at offset i*D");
    }
  }
  c.note("L=4..1000 partitions, 200 windowing triples");
  return c.done();
}

// ---------------------------------------------------------------------------
// 3. re-ranking oracle

EmbeddingVector random_unit(Rng& rng, std::size_t d) {
  std::vector<float> v(d);
  for (auto& x : v) x = static_cast<float>(uniform01(rng) * 2.0 - 1.0);
  l2_normalize(v);
  return {std::move(v), "acceptance"};
}

VectorStore random_store(Rng& rng, std::size_t segments, std::size_t d) {
  VectorStore store(d);
  for (std::size_t i = 0; i < segments; ++i) {
    const auto id = static_cast<std::int64_t>(i);
    const auto s = std::to_string(i);
    store.index_segment(id, {"full " + s, "start " + s, "mid " + s, "end " + s},
                        std::array{random_unit(rng, d), random_unit(rng, d), random_unit(rng, d), random_unit(rng, d)},
                        "c" + std::to_string(i % 5), "u" + std::to_string(i % 3));
  }
  return store;
}

double brute_cosine(const std::vector<float>& a, const std::vector<float>& b) {
  long double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<long double>(a[i]) * b[i];
    aa += static_cast<long double>(a[i]) * a[i];
    bb += static_cast<long double>(b[i]) * b[i];
  }
  return static_cast<double>(ab / std::sqrt(aa * bb));
}

Outcome criterion_rerank() {
  Check c;
  constexpr std::size_t kSegments = 250, kDim = 48;  // 1000 records
  Rng rng(31337);
  const auto store = random_store(rng, kSegments, kDim);
  const auto records = store.records();
  c.expect(records.size() == 1000, "store size");
  const RetrievalWeights weights{};
  double worst = 0;
  for (int query = 0; query < 50; ++query) {
    std::array<EmbeddingVector, kSubsegments> q;
    for (auto& v : q) v = random_unit(rng, kDim);

    // Exhaustive per-k lists through the store, fused by weighted_rerank.
    std::array<RankedList, kSubsegments> lists;
    for (std::size_t k = 0; k < kSubsegments; ++k) lists[k] = store.ann_search(q[k].values, k, kSegments);
    const auto fused = weighted_rerank(lists, weights, kSegments);

    // Independent brute force over the raw records.
    std::map<std::int64_t, double> score;
    for (const auto& r : records) score[r.segment_id] += weights[r.subsegment_id] * brute_cosine(q[r.subsegment_id].values, r.vector.values);
    std::vector<std::pair<std::int64_t, double>> oracle(score.begin(), score.end());
    std::stable_sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

    c.expect(fused.size() == oracle.size(), "fused size");
    for (std::size_t i = 0; i < std::min(fused.size(), oracle.size()); ++i) {
      c.expect(fused[i].segment_id == oracle[i].first, "order differs at rank " + std::to_string(i) + " of query " + std::to_string(query));
      const double err = std::abs(fused[i].fused_score - oracle[i].second);
      worst = std::max(worst, err);
      c.expect(err <= 1e-6, "score differs by " + fmt(err, 3));
    }

    const auto only_full = weighted_rerank(lists, RetrievalWeights{{1.0, 0.0, 0.0, 0.0}}, kSegments);
    c.expect(only_full.size() == lists[0].size(), "(1,0,0,0) size");
    for (std::size_t i = 0; i < std::min(only_full.size(), lists[0].size()); ++i) {
      c.expect(only_full[i].segment_id == lists[0][i].segment_id && only_full[i].fused_score == lists[0][i].score,
               "(1,0,0,0) differs from the k=0 ranking at rank " + std::to_string(i));
    }
  }
  c.note("50 queries over 1000 records, worst score error " + fmt(worst, 3));
  return c.done();
}

// ---------------------------------------------------------------------------
// Shared synthetic fixture for 4, 5, 6.

struct Fixture {
  std::vector<SensorWindow> indexing, test;
};

Fixture synth_fixture() {
  Fixture f;
  for (auto& w : synth_dataset(3, 200, 6, 40, 42)) (w.segment_id % 5 == 4 ? f.test : f.indexing).push_back(w);
  return f;
}

Pipeline synth_pipeline() {
  PipelineOptions opts;
  opts.q = 10;
  opts.jobs = 1;
  return Pipeline(synth_channel_names(6), std::make_shared<LocalDeterministicEmbedder>(kDefaultEmbeddingDim), std::make_shared<MockMajorityClient>(),
                  opts);
}

Outcome criterion_self_retrieval(const Pipeline& indexed) {
  Check c;
  const auto& store = indexed.store();
  const auto records = store.records();
  for (std::size_t i = 0; i < records.size(); i += kSubsegments) {
    const std::array<EmbeddingVector, kSubsegments> q{records[i].vector, records[i + 1].vector, records[i + 2].vector,
                                                      records[i + 3].vector};
    const auto out = store.retrieve(q, RetrievalWeights{{0.4, 0.2, 0.2, 0.2}}, 30, 10);
    const bool ok = !out.empty() && out[0].segment_id == records[i].segment_id && std::abs(out[0].fused_score - 1.0) <= 1e-6;
    c.expect(ok, "segment " + std::to_string(records[i].segment_id) + " not first with score 1");
  }
  c.note(std::to_string(store.segment_count()) + " segments");
  return c.done();
}

struct BenchOutcome {
  Outcome end_to_end, baseline;
};

BenchOutcome criterion_benchmark(Pipeline& first) {
  const auto f = synth_fixture();
  Check e2e, base;
  const auto a = run_benchmark(first, f.indexing, f.test);
  auto second = synth_pipeline();
  const auto b = run_benchmark(second, f.indexing, f.test);
  // Summary plus every per-window prediction and retrieval score.
  auto serialize = [](const EvalReport& r) {
    std::ostringstream os;
    os << r.to_json(false).dump() << '\n';
    os.precision(17);
    for (const auto& w : r.results) {
      os << w.segment_id << ' ' << w.truth << ' ' << w.predicted << ' ' << w.baseline;
      for (double s : w.context_scores) os << ' ' << s;
      os << '\n';
    }
    return os.str();
  };
  const auto ja = serialize(a), jb = serialize(b);

  e2e.expect(a.n_failed == 0, "failures: " + std::to_string(a.n_failed));
  e2e.expect(a.n_samples == f.test.size(), "n_samples");
  e2e.expect(a.macro_f1 >= 0.95, "macro-F1 " + fmt(a.macro_f1));
  e2e.expect(ja == jb, "reports differ between runs");
  e2e.expect(a.runtime_seconds < 60.0, "runtime " + fmt(a.runtime_seconds) + " s");
  e2e.note("macro-F1 " + fmt(a.macro_f1) + ", " + std::to_string(a.n_samples) + " test windows, report " +
           std::to_string(ja.size()) + " bytes identical across runs, run " + fmt(a.runtime_seconds, 3) + " s");

  if (!a.baseline) {
    base.expect(false, "no baseline computed");
  } else {
    base.expect(a.baseline->threshold == 0.75, "threshold");
    base.expect(a.baseline->accuracy >= 0.90, "baseline accuracy " + fmt(a.baseline->accuracy));
    base.expect(a.baseline->accuracy <= a.accuracy, "baseline beats the pipeline");
    base.note("baseline accuracy " + fmt(a.baseline->accuracy) + " <= pipeline accuracy " + fmt(a.accuracy));
  }
  return {e2e.done(), base.done()};
}

// ---------------------------------------------------------------------------
// 7. optimizer on the keyword landscape

std::size_t keyword_count(std::string_view text) {
  std::size_t n = 0;
  for (auto pos = text.find("MAGIC"); pos != std::string_view::npos; pos = text.find("MAGIC", pos + 1)) ++n;
  return n;
}

FunctionClient keyword_generator() {
  auto counter = std::make_shared<int>(0);
  return FunctionClient([counter](std::string_view, std::string_view meta) {
    const int n = (*counter)++;
    if (meta.find("STRATEGY: Combination") == std::string_view::npos) return "plain instruction #" + std::to_string(n);
    const std::regex block(R"(-- instruction \d+ \(fitness=([0-9.e+-]+)\) --\n([^\n]*)\n)");
    std::string best;
    double best_fit = -1;
    const std::string m(meta);
    for (std::sregex_iterator it(m.begin(), m.end(), block), end; it != end; ++it) {
      const double fit = std::stod((*it)[1]);
      if (fit > best_fit) best_fit = fit, best = (*it)[2];
    }
    return best.substr(0, best.find(" #")) + " MAGIC #" + std::to_string(n);
  });
}

Outcome criterion_optimizer() {
  Check c;
  const FitnessFunction fitness = [](const std::string& s) {
    return std::min(1.0, static_cast<double>(keyword_count(s)) / 10.0);
  };
  OptimizerConfig cfg;
  cfg.initial_candidates = 8;
  cfg.selected_per_iteration = 3;
  cfg.max_iterations = 40;
  cfg.patience = 3;
  cfg.schedule = PhaseSchedule{1, 40};
  cfg.seed = 5;
  cfg.exemplar_count = 0;

  auto gen = keyword_generator();
  const auto r = optimize(cfg, gen, fitness);
  const auto& its = r.log.iterations;
  for (std::size_t i = 1; i < its.size(); ++i) c.expect(its[i].best_fitness >= its[i - 1].best_fitness, "best fitness decreased");
  c.expect(r.best.fitness == 1.0, "did not saturate: " + fmt(r.best.fitness.value_or(-1)));
  c.expect(r.stopped_by_patience && !its.empty() && its.back().stagnant == cfg.patience, "did not stop on patience");
  // The last improvement must be followed by exactly T stagnant iterations.
  std::size_t last_improvement = 0;
  for (std::size_t i = 1; i < its.size(); ++i) {
    if (its[i].best_fitness > its[i - 1].best_fitness) last_improvement = i;
  }
  c.expect(its.size() - 1 - last_improvement == static_cast<std::size_t>(cfg.patience), "ran past T stagnant iterations");
  const auto bound = cfg.initial_candidates + static_cast<std::size_t>(cfg.max_iterations) * cfg.selected_per_iteration;
  c.expect(r.evaluations <= bound, "evaluations " + std::to_string(r.evaluations));

  auto gen2 = keyword_generator();
  c.expect(optimize(cfg, gen2, fitness).log.to_jsonl() == r.log.to_jsonl(), "rerun with the same seed differs");
  c.note(std::to_string(its.size()) + " iterations, " + std::to_string(r.evaluations) + " evaluations (bound " +
         std::to_string(bound) + "), best " + fmt(r.best.fitness.value_or(-1)));
  return c.done();
}

// ---------------------------------------------------------------------------
// 8. roulette

Outcome criterion_roulette() {
  Check c;
  std::vector<PromptCandidate> pool(3);
  const double fit[] = {0.2, 0.3, 0.5};
  for (std::size_t i = 0; i < 3; ++i) {
    pool[i].id = static_cast<int>(i);
    pool[i].instruction_text = "c" + std::to_string(i);
    pool[i].set_fitness(fit[i]);
  }
  Rng rng(8);
  constexpr int kTrials = 100000;
  std::array<int, 3> hits{};
  for (int t = 0; t < kTrials; ++t) ++hits[roulette_select(pool, 1, rng).front()];
  std::string freqs;
  for (std::size_t i = 0; i < 3; ++i) {
    const double f = static_cast<double>(hits[i]) / kTrials;
    c.expect(std::abs(f - fit[i]) <= 0.01, "frequency " + fmt(f) + " for fitness " + fmt(fit[i]));
    freqs += (i ? ", " : "") + fmt(f);
  }
  c.note("frequencies (" + freqs + ")");
  return c.done();
}

// ---------------------------------------------------------------------------
// 9. open-set hygiene

class RecordingClient final : public LlmClient {
 public:
  std::string complete(std::string_view system, std::string_view user) override {
    {
      std::lock_guard lock(mutex_);
      prompts.push_back(std::string(system) + "\n" + std::string(user));
    }
    return inner_.complete(system, user);
  }
  std::string provider_id() const override { return "mock/recording"; }
  bool is_local() const override { return true; }

  std::vector<std::string> prompts;

 private:
  std::mutex mutex_;
  MockMajorityClient inner_;
};

Outcome criterion_openset() {
  Check c;
  const auto data = synth_dataset(12, 20, 3, 32, 12);
  const std::pair<double, std::size_t> levels[] = {{0.3, 4}, {0.5, 6}, {0.7, 8}};
  std::size_t scanned = 0;
  for (const auto& [openness, expected] : levels) {
    const auto split = make_openset_split(data, openness, 2024);
    c.expect(split.withheld_classes.size() == expected,
             "openness " + fmt(openness) + ": withheld " + std::to_string(split.withheld_classes.size()));
    auto client = std::make_shared<RecordingClient>();
    Pipeline p(synth_channel_names(3), std::make_shared<LocalDeterministicEmbedder>(256), client);
    OpenSetRunOptions opts;
    opts.mode = {LabelMode::TrueLabelHidden};
    const auto report = run_openset(p, data, split, opts);
    c.expect(report.eval.n_failed == 0, "open-set run had failures");
    c.expect(client->prompts.size() == split.test_ids.size(), "prompt count");
    for (const auto& rec : p.store().records()) {
      for (const auto& w : split.withheld_classes) {
        c.expect(rec.label != w && !contains_token(rec.feature_text, w) && !contains_token(rec.user_id, w),
                 "withheld label " + w + " in indexed record");
      }
    }
    for (const auto& prompt : client->prompts) {
      for (const auto& w : split.withheld_classes) c.expect(!contains_token(prompt, w), "withheld label " + w + " in a prompt");
      ++scanned;
    }
  }
  c.note("withheld 4/6/8, " + std::to_string(scanned) + " hidden-mode prompts scanned");
  return c.done();
}

// ---------------------------------------------------------------------------
// 10. metrics

Outcome criterion_metrics() {
  Check c;
  const std::vector<std::string> ab{"a", "b"};
  const auto f = f1_scores(confusion(std::vector<std::string>{"a", "a", "b"}, std::vector<std::string>{"a", "b", "b"}, ab));
  c.expect(std::abs(f.macro_f1 - 2.0 / 3.0) < 1e-12, "macro-F1 " + fmt(f.macro_f1));
  c.expect(std::abs(f.macro_f1 - 0.6667) < 5e-5, "macro-F1 does not round to 0.6667");

  Rng rng(10);
  const std::vector<std::string> labels{"w", "x", "y", "z"};
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 200);
    std::vector<std::string> t(n), p(n);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = labels[uniform_index(rng, labels.size())];
      p[i] = labels[uniform_index(rng, labels.size())];
      agree += t[i] == p[i];
    }
    const double direct = static_cast<double>(agree) / static_cast<double>(n);
    c.expect(std::abs(confusion(t, p, labels).accuracy() - direct) < 1e-12, "accuracy mismatch on trial " + std::to_string(trial));
  }
  c.note("macro-F1 " + fmt(f.macro_f1) + ", 100 random label vectors agree");
  return c.done();
}

// ---------------------------------------------------------------------------
// 11. persistence

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome criterion_persistence() {
  Check c;
  const auto dir = std::filesystem::temp_directory_path() / ("statrag_acceptance_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  Rng rng(11);
  const auto store = random_store(rng, 2500, 64);  // 10,000 records
  save_store(store, dir / "a.bin");
  const auto loaded = load_store(dir / "a.bin");
  c.expect(loaded.record_count() == 10000, "record count");
  c.expect(loaded == store, "loaded store differs");
  const auto ra = store.records(), rb = loaded.records();
  bool bits = ra.size() == rb.size();
  for (std::size_t i = 0; bits && i < ra.size(); ++i) {
    bits = ra[i].vector.values.size() == rb[i].vector.values.size() &&
           std::memcmp(ra[i].vector.values.data(), rb[i].vector.values.data(), ra[i].vector.values.size() * sizeof(float)) == 0 &&
           ra[i].feature_text == rb[i].feature_text && ra[i].label == rb[i].label && ra[i].user_id == rb[i].user_id;
  }
  c.expect(bits, "vectors are not bit-identical");
  save_store(loaded, dir / "b.bin");
  const auto bytes = slurp(dir / "a.bin");
  c.expect(bytes == slurp(dir / "b.bin"), "re-saved file differs");

  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x01;
  std::ofstream(dir / "c.bin", std::ios::binary) << flipped;
  bool detected = false;
  try {
    (void)load_store(dir / "c.bin");
  } catch (const statrag::Error& e) {
    detected = e.code() == ErrorCode::CorruptStore;
  }
  c.expect(detected, "single-bit corruption not detected");
  std::ofstream(dir / "d.bin", std::ios::binary) << bytes.substr(0, bytes.size() / 3);
  detected = false;
  try {
    (void)load_store(dir / "d.bin");
  } catch (const statrag::Error& e) {
    detected = e.code() == ErrorCode::CorruptStore;
  }
  c.expect(detected, "truncation not detected");
  std::filesystem::remove_all(dir);
  c.note("10000 records, " + std::to_string(bytes.size()) + " bytes, corruption detected");
  return c.done();
}

// ---------------------------------------------------------------------------
// 12. cost ledger

Outcome criterion_cost() {
  Check c;
  // 600 mock predictions, each one chat request of 3,000 prompt chars and 40
  // reply chars, plus one 4-text embedding request. Rates are chosen so that
  // the total is 0.3739.
  std::vector<UsageRecord> log;
  for (int i = 0; i < 600; ++i) {
    log.push_back({RequestKind::Embedding, "remote/embed", false, 4 * 900, 0, "classify"});
    log.push_back({RequestKind::Chat, "remote/chat", false, 3000, 40, "classify"});
  }
  // Tokens: embedding 600*900, chat in 600*750, chat out 600*10.
  const double embed_tokens = 600.0 * 900, in_tokens = 600.0 * 750, out_tokens = 600.0 * 10;
  const double embed_share = 0.0139, out_share = 0.06;
  const CostRates rates{1000.0 * embed_share / embed_tokens, 1000.0 * (0.3739 - embed_share - out_share) / in_tokens,
                        1000.0 * out_share / out_tokens};
  const auto ledger = replay_usage(log, rates, 600);
  c.expect(std::abs(ledger.total_cost - 0.3739) < 1e-9, "total " + fmt(ledger.total_cost, 8));
  const double per = ledger.per_sample_cost();
  c.expect(std::abs(per - 0.000623) < 5e-7, "per-sample " + fmt(per, 8));
  c.note("total $" + fmt(ledger.total_cost, 6) + ", per-sample $" + fmt(per, 3));
  return c.done();
}

}  // namespace

int main() {
  using clock = std::chrono::steady_clock;
  int failures = 0;
  auto report = [&](int id, const char* name, double budget_s, const std::function<Outcome()>& fn) {
    const auto t0 = clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(clock::now() - t0).count();
    if (budget_s > 0 && secs >= budget_s) {
      o.ok = false;
      o.detail = "over budget (" + fmt(budget_s) + " s); " + o.detail;
    }
    failures += !o.ok;
    std::printf("%s %d: %s [%.2f s] %s\n", o.ok ? "PASS" : "FAIL", id, name, secs, o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "statistics oracle", 5.0, criterion_statistics);
  report(2, "partition and windowing", 2.0, criterion_windowing);
  report(3, "re-ranking oracle", 10.0, criterion_rerank);

  report(4, "self-retrieval", 0, [] {
    const auto f = synth_fixture();
    auto p = synth_pipeline();
    p.fit_normalization(f.indexing);
    p.index(f.indexing);
    return criterion_self_retrieval(p);
  });
  BenchOutcome bench;
  report(5, "end-to-end synthetic benchmark", 60.0, [&] {
    auto p = synth_pipeline();
    bench = criterion_benchmark(p);
    return bench.end_to_end;
  });
  report(6, "retrieval-only baseline", 0, [&] { return bench.baseline; });
  report(7, "optimizer keyword landscape", 30.0, criterion_optimizer);
  report(8, "roulette selection", 0, criterion_roulette);
  report(9, "open-set hygiene", 0, criterion_openset);
  report(10, "metrics", 0, criterion_metrics);
  report(11, "persistence", 5.0, criterion_persistence);
  report(12, "cost ledger", 0, criterion_cost);

  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
