#include <fstream>

#include "helpers.hpp"
#include "statrag/config.hpp"

using namespace statrag;
using nlohmann::json;

TEST_CASE("engine config defaults") {
  const auto c = parse_engine_config(json::object());
  CHECK(c.pipeline.weights.w == std::array<double, 4>{0.4, 0.2, 0.2, 0.2});
  CHECK(c.pipeline.q == 10);
  CHECK(c.pipeline.threshold == 0.75);
  CHECK(c.embedding.dimension == 1536);
  CHECK(c.llm.kind == LlmKind::MockMajority);
  CHECK(c.optimizer_llm.kind == LlmKind::MockTemplates);
  CHECK(c.dataset.source == DatasetConfig::Source::Synthetic);
}

TEST_CASE("engine config parsing") {
  const auto c = parse_engine_config(json::parse(R"({
    "seed": 9,
    "jobs": 2,
    "retrieval": {"weights": [0.25, 0.25, 0.25, 0.25], "q": 5, "missing_scores": "rescore"},
    "embedding": {"provider": "local_text_hash", "dimension": 64},
    "optimizer": {"initial_candidates": 4, "selected_per_iteration": 2, "schedule": [1, 2]},
    "openset": {"openness": 0.5, "mode": "available"},
    "cost_rates": {"llm_input_per_1k": 0.1}
  })"));
  CHECK(c.seed == 9);
  CHECK(c.optimizer.seed == 9);
  CHECK(c.llm.seed == 9);
  CHECK(c.pipeline.jobs == 2);
  CHECK(c.pipeline.q == 5);
  CHECK(c.pipeline.missing_scores == MissingScorePolicy::Rescore);
  CHECK(c.embedding.kind == ProviderKind::LocalTextHash);
  CHECK(c.optimizer.schedule->combination_end == 2);
  CHECK(c.openset.mode == LabelMode::TrueLabelAvailable);
  CHECK(c.rates->llm_input_per_1k == 0.1);

  // The effective config parses back to itself.
  const auto dumped = engine_config_to_json(c);
  CHECK(engine_config_to_json(parse_engine_config(dumped)) == dumped);
}

TEST_CASE("engine config rejects bad input") {
  auto bad = [](const char* text) { return parse_engine_config(json::parse(text)); };
  CHECK_THROWS_CODE(bad(R"({"surprise": 1})"), ErrorCode::ConfigInvalid);
  CHECK_THROWS_CODE(bad(R"({"retrieval": {"k": 3}})"), ErrorCode::ConfigInvalid);
  CHECK_THROWS_CODE(bad(R"({"llm": {"api_key": "sk-123"}})"), ErrorCode::ConfigInvalid);
  CHECK_THROWS_CODE(bad(R"({"retrieval": {"weights": [0.5, 0.5]}})"), ErrorCode::ConfigInvalid);
  CHECK_THROWS_CODE(bad(R"({"retrieval": {"weights": [0.5, 0.5, 0.5, 0.5]}})"), ErrorCode::InvalidWeights);
  CHECK_THROWS_CODE(bad(R"({"retrieval": {"q": -1}})"), ErrorCode::ConfigInvalid);
  CHECK_THROWS_CODE(bad(R"({"retrieval": {"q": "ten"}})"), ErrorCode::ConfigInvalid);
  CHECK_THROWS_CODE(bad(R"({"openset": {"openness": 1.0}})"), ErrorCode::ConfigInvalid);
  CHECK_THROWS_CODE(bad(R"({"dataset": {"source": "csv"}})"), ErrorCode::InvalidSchema);
  CHECK_THROWS_CODE(bad(R"({"llm": {"kind": "remote_chat"}})"), ErrorCode::ConfigInvalid);
  CHECK_THROWS_CODE(bad(R"({"optimizer": {"patience": 0}})"), ErrorCode::ConfigInvalid);
  CHECK_THROWS_CODE(bad(R"([1, 2])"), ErrorCode::ConfigInvalid);

  test::TempDir dir("cfg");
  std::ofstream(dir.path / "broken.json") << "{ not json";
  CHECK_THROWS_CODE(load_engine_config(dir.path / "broken.json"), ErrorCode::ConfigInvalid);
  CHECK_THROWS_CODE(load_engine_config(dir.path / "missing.json"), ErrorCode::IoError);
}

TEST_CASE("synthetic splits") {
  DatasetConfig d;
  d.synth_classes = 2;
  d.synth_windows_per_class = 10;
  d.synth_channels = 2;
  d.synth_window_len = 12;
  auto s = load_splits(d);
  CHECK(s.indexing.size() == 16);
  CHECK(s.test.size() == 4);
  CHECK(s.validation.empty());
  d.synth_validation = true;
  s = load_splits(d);
  CHECK(s.indexing.size() == 12);
  CHECK(s.validation.size() == 4);
  for (const auto& w : s.test) CHECK(w.segment_id % 5 == 4);
}

TEST_CASE("windows survive a CSV round trip") {
  test::TempDir dir("csv");
  const auto windows = synth_dataset(3, 7, 2, 16, 4);
  const auto names = synth_channel_names(2);
  write_windows_csv(windows, names, dir.path / "w.csv");

  DatasetConfig d;
  d.source = DatasetConfig::Source::Csv;
  d.indexing_path = dir.path / "w.csv";
  d.schema.channel_columns = names;
  d.schema.window_len = 16;
  d.schema.step = 16;
  const auto back = load_splits(d).indexing;
  REQUIRE(back.size() == windows.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].label == windows[i].label);
    CHECK(back[i].subject_id == windows[i].subject_id);
    CHECK(back[i].samples == windows[i].samples);
  }
}

TEST_CASE("normalization and usage persistence") {
  test::TempDir dir("persist");
  const NormalizationStats stats{{0.1, -2.5e-7}, {1.0 / 3.0, 4.0}};
  save_normalization(stats, dir.path / "n.json");
  const auto n = load_normalization(dir.path / "n.json");
  CHECK(n.mean == stats.mean);
  CHECK(n.stddev == stats.stddev);

  const std::vector<UsageRecord> log{{RequestKind::Chat, "remote/m", false, 4000, 12, "classify"},
                                     {RequestKind::Embedding, "local", true, 80, 0, "index"}};
  save_usage(log, dir.path / "u.jsonl");
  const auto back = load_usage(dir.path / "u.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].kind == RequestKind::Chat);
  CHECK(back[0].chars_out == 12);
  CHECK(back[1].local);
  CHECK(back[1].purpose == "index");

  std::ofstream(dir.path / "bad.jsonl") << "{\"kind\": \"fax\", \"provider\": \"x\", \"local\": false, \"chars_in\": 1}\n";
  CHECK_THROWS_CODE(load_usage(dir.path / "bad.jsonl"), ErrorCode::ConfigInvalid);
}
