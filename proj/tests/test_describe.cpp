#include <atomic>

#include "helpers.hpp"
#include "statrag/describe.hpp"
#include "statrag/embed.hpp"

using namespace statrag;

namespace {

SensorWindow two_channel(std::int64_t id, double a_amp, double b_amp, std::size_t len = 5) {
  SensorWindow w;
  w.segment_id = id;
  w.subject_id = "s1";
  w.label = "walk";
  w.samples.channels.resize(2);
  for (std::size_t t = 0; t < len; ++t) {
    const double sign = t % 2 == 0 ? 1.0 : -1.0;
    w.samples.channels[0].push_back(a_amp * sign + 0.001 * static_cast<double>(t));
    w.samples.channels[1].push_back(b_amp * sign);
  }
  return w;
}

SensorConfig two_channel_config() {
  const std::vector<std::string> names{"acc_x", "acc_y"};
  return SensorConfig::from_names(names, 50.0);
}

std::size_t count_of(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

std::string well_formed() {
  std::string out;
  for (auto s : kDescriptorSections) {
    out += "## " + std::string(s) + "\n";
    for (auto f : kDescriptorFacets) out += std::string(f) + ": something 1.0\n";
  }
  return out;
}

}  // namespace

TEST_CASE("build_descriptor_prompt") {
  const auto w = two_channel(1, 1.0, 2.0);
  const auto prompt = build_descriptor_prompt(w, two_channel_config());
  CHECK(count_of(prompt, "\nacc_x: ") == 1);
  const auto line_start = prompt.find("\nacc_x: ") + 1;
  const auto line = prompt.substr(line_start, prompt.find('\n', line_start) - line_start);
  CHECK(count_of(line, ",") == 4);
  CHECK(line.find("1.0000") != std::string::npos);
  CHECK(prompt.find("50") != std::string::npos);
  for (auto s : kDescriptorSections) CHECK(prompt.find("## " + std::string(s)) != std::string::npos);
  for (auto f : kDescriptorFacets) CHECK(prompt.find(std::string(f)) != std::string::npos);
  CHECK(build_descriptor_prompt(w, two_channel_config()) == prompt);

  auto short_cfg = two_channel_config();
  short_cfg.channels.pop_back();
  CHECK_THROWS_CODE(build_descriptor_prompt(w, short_cfg), ErrorCode::ConfigMismatch);
}

TEST_CASE("build_descriptor_prompt subsamples above the budget") {
  const auto w = two_channel(1, 1.0, 2.0, 100);
  const auto prompt = build_descriptor_prompt(w, two_channel_config(), 50);
  CHECK(prompt.find("subsampled") != std::string::npos);
  const auto line_start = prompt.find("\nacc_x: ") + 1;
  const auto line = prompt.substr(line_start, prompt.find('\n', line_start) - line_start);
  CHECK(count_of(line, ",") + 1 <= 25);
}

TEST_CASE("parse_descriptor") {
  const auto d = parse_descriptor(well_formed(), 4);
  CHECK(d.segment_id == 4);
  const auto texts = d.section_texts();
  CHECK(texts[0].starts_with("## FULL\n"));
  CHECK(texts[2].starts_with("## MID\n"));

  std::string missing_mid = well_formed();
  const auto at = missing_mid.find("## MID");
  missing_mid.erase(at, missing_mid.find("## END") - at);
  CHECK_THROWS_CODE(parse_descriptor(missing_mid, 1), ErrorCode::MalformedDescriptor);

  std::string missing_facet = well_formed();
  missing_facet.erase(missing_facet.rfind("transitions"), std::string::npos);
  CHECK_THROWS_CODE(parse_descriptor(missing_facet, 1), ErrorCode::MalformedDescriptor);
  CHECK_THROWS_CODE(parse_descriptor("", 1), ErrorCode::MalformedDescriptor);
}

TEST_CASE("generate_descriptor") {
  SUBCASE("mock contract") {
    MockDescriptorClient client;
    const auto w = two_channel(3, 1.0, 2.0, 12);
    const auto prompt = build_descriptor_prompt(w, two_channel_config());
    const auto d = generate_descriptor(client, prompt, 3);
    for (const auto& t : d.section_texts()) {
      for (auto f : kDescriptorFacets) CHECK(t.find(std::string(f) + ":") != std::string::npos);
    }
    CHECK(generate_descriptor(client, prompt, 3).section_texts() == d.section_texts());
  }
  SUBCASE("dominant axis follows variance") {
    MockDescriptorClient client;
    const auto a = generate_descriptor(client, build_descriptor_prompt(two_channel(1, 5.0, 1.0, 12), two_channel_config()), 1);
    const auto b = generate_descriptor(client, build_descriptor_prompt(two_channel(2, 1.0, 5.0, 12), two_channel_config()), 2);
    CHECK(a.full_analysis.find("dominant_axis: acc_x") != std::string::npos);
    CHECK(b.full_analysis.find("dominant_axis: acc_y") != std::string::npos);
  }
  SUBCASE("missing section twice") {
    std::atomic<int> calls{0};
    FunctionClient client([&](std::string_view, std::string_view) {
      ++calls;
      std::string r = well_formed();
      r.erase(r.find("## MID"), r.find("## END") - r.find("## MID"));
      return r;
    });
    CHECK_THROWS_CODE(generate_descriptor(client, "p", 1), ErrorCode::MalformedDescriptor);
    CHECK(calls == 2);
  }
  SUBCASE("second attempt succeeds") {
    int calls = 0;
    FunctionClient client([&](std::string_view, std::string_view) { return ++calls == 1 ? std::string("junk") : well_formed(); });
    CHECK_NOTHROW(generate_descriptor(client, "p", 1));
  }
}

TEST_CASE("index_with_descriptors") {
  VectorStore store(64);
  MockDescriptorClient client;
  LocalDeterministicEmbedder embedder(64);
  const std::vector<SensorWindow> windows{two_channel(1, 1.0, 2.0, 12), two_channel(2, 2.0, 1.0, 12),
                                          two_channel(3, 3.0, 3.0, 12)};
  index_with_descriptors(store, windows, client, embedder, two_channel_config());
  CHECK(store.record_count() == 12);
  CHECK(store.mode() == TextMode::Descriptor);
  for (const auto& r : store.records()) CHECK(r.feature_text.starts_with("## "));
  const auto hits = store.ann_search(store.records()[0].vector.values, 0, 3);
  CHECK(hits.size() == 3);
  CHECK(hits[0].segment_id == 1);

  // Template records cannot join a descriptor store.
  const auto v = store.records()[0].vector;
  CHECK_THROWS_CODE(store.index_segment(9, {"a 1", "b 1", "c 1", "d 1"}, std::array{v, v, v, v}, "walk", "s1",
                                        TextMode::Template),
                    ErrorCode::ModeMismatch);
}
