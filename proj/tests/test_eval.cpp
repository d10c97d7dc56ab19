#include <cmath>

#include "helpers.hpp"
#include "statrag/eval.hpp"
#include "statrag/random.hpp"

using namespace statrag;

namespace {

std::vector<std::string> sv(std::initializer_list<const char*> xs) { return {xs.begin(), xs.end()}; }

struct SplitData {
  std::vector<SensorWindow> indexing, test;
};

SplitData synth_split(std::size_t classes, std::size_t per_class, std::uint64_t seed = 7) {
  SplitData d;
  for (auto& w : synth_dataset(classes, per_class, 3, 40, seed)) (w.segment_id % 5 == 4 ? d.test : d.indexing).push_back(w);
  return d;
}

Pipeline mock_pipeline(std::shared_ptr<UsageLog> usage = {}, PipelineOptions opts = {}) {
  return Pipeline(synth_channel_names(3), std::make_shared<LocalDeterministicEmbedder>(256, usage),
                  std::make_shared<MockMajorityClient>(usage), opts);
}

}  // namespace

TEST_CASE("confusion") {
  const auto ab = sv({"a", "b"});
  auto m = confusion(ab, ab, ab);
  CHECK(m.counts == std::vector<std::vector<std::size_t>>{{1, 0}, {0, 1}});
  m = confusion(sv({"a", "a"}), sv({"b", "b"}), ab);
  CHECK(m.counts[0][1] == 2);
  CHECK(m.accuracy() == 0.0);
  CHECK_THROWS_CODE(confusion(sv({"a"}), sv({"c"}), ab), ErrorCode::LabelOutOfSet);
  CHECK_THROWS_CODE(confusion(sv({"a"}), sv({"a", "b"}), ab), ErrorCode::LengthMismatch);
}

TEST_CASE("f1_scores") {
  SUBCASE("hand-computed") {
    const auto f = f1_scores(confusion(sv({"a", "a", "b"}), sv({"a", "b", "b"}), sv({"a", "b"})));
    CHECK(f.per_class[0].f1 == doctest::Approx(2.0 / 3.0));
    CHECK(f.per_class[1].f1 == doctest::Approx(2.0 / 3.0));
    CHECK(f.per_class[0].precision == 1.0);
    CHECK(f.per_class[0].recall == 0.5);
    CHECK(f.macro_f1 == doctest::Approx(0.6667).epsilon(1e-4));
  }
  SUBCASE("perfect") {
    const auto f = f1_scores(confusion(sv({"a", "b", "c"}), sv({"a", "b", "c"}), sv({"a", "b", "c"})));
    for (const auto& c : f.per_class) CHECK(c.f1 == 1.0);
  }
  SUBCASE("zero support, zero predictions") {
    const auto f = f1_scores(confusion(sv({"a", "b"}), sv({"a", "b"}), sv({"a", "b", "z"})));
    CHECK(f.per_class[2].f1 == 0.0);
    CHECK(f.weighted_f1 == 1.0);
    CHECK(f.macro_f1 == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("macro equals weighted with equal supports") {
    const auto f = f1_scores(confusion(sv({"a", "a", "b", "b"}), sv({"a", "b", "b", "b"}), sv({"a", "b"})));
    CHECK(f.macro_f1 == doctest::Approx(f.weighted_f1));
  }
}

TEST_CASE("confusion accuracy equals direct agreement") {
  Rng rng(99);
  const auto labels = sv({"a", "b", "c", "d"});
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 50);
    std::vector<std::string> t(n), p(n);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = labels[uniform_index(rng, 4)];
      p[i] = labels[uniform_index(rng, 4)];
      agree += t[i] == p[i];
    }
    const auto m = confusion(t, p, labels);
    CHECK(m.accuracy() == doctest::Approx(static_cast<double>(agree) / static_cast<double>(n)));
    for (std::size_t r = 0; r < 4; ++r) {
      std::size_t row = 0;
      for (auto c : m.counts[r]) row += c;
      CHECK(row == static_cast<std::size_t>(std::count(t.begin(), t.end(), labels[r])));
    }
  }
}

TEST_CASE("cost ledger") {
  SUBCASE("per-sample division") {
    // One chat request per prediction, 4000 input chars (1000 tokens) each.
    std::vector<UsageRecord> log;
    for (int i = 0; i < 600; ++i) log.push_back({RequestKind::Chat, "remote/x", false, 4000, 0, "classify"});
    const CostRates rates{0.0, 0.3739 / 600.0, 0.0};
    const auto ledger = replay_usage(log, rates, 600);
    CHECK(ledger.total_cost == doctest::Approx(0.3739).epsilon(1e-12));
    CHECK(ledger.per_sample_cost() == doctest::Approx(0.000623).epsilon(1e-3));
  }
  SUBCASE("zero requests") {
    const auto ledger = replay_usage({}, CostRates{1, 1, 1}, 0);
    CHECK(ledger.total_cost == 0.0);
    CHECK(ledger.per_sample_cost() == 0.0);
  }
  SUBCASE("embedding only; local is free") {
    const std::vector<UsageRecord> log{{RequestKind::Embedding, "remote/e", false, 401, 0, "index"},
                                       {RequestKind::Embedding, "local", true, 4000, 0, "index"}};
    const auto ledger = replay_usage(log, CostRates{2.0, 5.0, 5.0}, 1);
    CHECK(ledger.llm_cost == 0.0);
    CHECK(ledger.entries[0].tokens_in == 101);
    CHECK(ledger.embedding_cost == doctest::Approx(0.202));
    CHECK(ledger.entries[1].cost == 0.0);
    double sum = 0;
    for (const auto& e : ledger.entries) sum += e.cost;
    CHECK(ledger.total_cost == doctest::Approx(sum));
  }
  CHECK(estimate_tokens(0) == 0);
  CHECK(estimate_tokens(1) == 1);
  CHECK(estimate_tokens(8) == 2);
  CHECK(estimate_tokens(9) == 3);
}

TEST_CASE("pipeline end to end on synthetic data") {
  const auto d = synth_split(3, 40);
  auto usage = std::make_shared<UsageLog>();
  auto p = mock_pipeline(usage);
  BenchmarkOptions opts;
  opts.rates = CostRates{0.1, 0.1, 0.1};
  opts.usage = usage;
  const auto report = run_benchmark(p, d.indexing, d.test, opts);
  CHECK(report.n_samples == d.test.size());
  CHECK(report.n_failed == 0);
  CHECK(report.macro_f1 >= 0.95);
  CHECK(report.exact == d.test.size());
  REQUIRE(report.baseline.has_value());
  CHECK(report.baseline->accuracy >= 0.9);
  REQUIRE(report.cost.has_value());
  CHECK(report.cost->total_cost == 0.0);
  CHECK(report.cost->llm_requests == d.test.size());

  auto again = mock_pipeline();
  const auto second = run_benchmark(again, d.indexing, d.test);
  auto third = mock_pipeline();
  CHECK(run_benchmark(third, d.indexing, d.test).to_json(false) == second.to_json(false));

  const auto text = report.to_text();
  CHECK(text.find("macro-F1") != std::string::npos);
  const auto csv = report.confusion_csv();
  CHECK(csv.starts_with("true\\predicted,activity_0,activity_1,activity_2\n"));
}

TEST_CASE("run_benchmark validation and per-window failures") {
  const auto d = synth_split(2, 10);
  auto p = mock_pipeline();
  CHECK_THROWS_CODE(run_benchmark(p, d.indexing, {}), ErrorCode::ConfigInvalid);

  auto flaky = std::make_shared<FunctionClient>([calls = std::make_shared<int>(0)](std::string_view, std::string_view) -> std::string {
    if ((*calls)++ == 1) throw Error(ErrorCode::ProviderUnavailable, "down");
    return "label: activity_0";
  });
  Pipeline fp(synth_channel_names(3), std::make_shared<LocalDeterministicEmbedder>(128), flaky);
  const auto r = run_benchmark(fp, d.indexing, d.test);
  CHECK(r.n_failed == 1);
  CHECK(r.n_samples + r.n_failed == d.test.size());
  CHECK(r.to_json()["failures"].size() == 1);
}

TEST_CASE("pipeline behaviour") {
  const auto d = synth_split(3, 20);
  auto p = mock_pipeline();
  p.fit_normalization(d.indexing);
  p.index(d.indexing);
  CHECK(p.store().segment_count() == d.indexing.size());
  CHECK(p.label_set() == sv({"activity_0", "activity_1", "activity_2"}));
  CHECK_THROWS_CODE(p.index(std::span(d.indexing).first(1)), ErrorCode::DuplicateSegment);

  const auto a = p.classify(d.test[0]);
  const auto b = p.classify(d.test[0]);
  CHECK(a.prediction == b.prediction);
  CHECK(a.contexts.size() == 10);
  const auto labels = p.label_set();
  for (const auto& c : a.contexts) CHECK(std::count(labels.begin(), labels.end(), c.label) == 1);

  CHECK_THROWS_CODE(p.set_store(std::make_shared<VectorStore>(64)), ErrorCode::DimensionMismatch);

  PipelineOptions bad;
  bad.q = 0;
  CHECK_THROWS_CODE(mock_pipeline({}, bad), ErrorCode::ConfigInvalid);
}

TEST_CASE("descriptor-mode pipeline") {
  const auto d = synth_split(2, 15);
  PipelineOptions opts;
  opts.text_mode = TextMode::Descriptor;
  auto p = mock_pipeline({}, opts);
  p.set_describer(std::make_shared<MockDescriptorClient>(), SensorConfig::from_names(synth_channel_names(3), 50.0));
  const auto r = run_benchmark(p, d.indexing, d.test);
  CHECK(r.n_failed == 0);
  CHECK(p.store().mode() == TextMode::Descriptor);
  CHECK(r.macro_f1 > 0.5);
}
