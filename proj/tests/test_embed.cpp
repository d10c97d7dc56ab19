#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "helpers.hpp"
#include "httplib.h"
#include "json.hpp"
#include "statrag/embed.hpp"
#include "statrag/features.hpp"
#include "statrag/http.hpp"
#include "statrag/random.hpp"

using namespace statrag;

namespace {

// Minimal embeddings endpoint on a loopback port.
class FakeEndpoint {
 public:
  explicit FakeEndpoint(int fail_status = 0) : fail_status_(fail_status) {
    server_.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      last_auth_ = req.get_header_value("Authorization");
      if (fail_status_ != 0) {
        res.status = fail_status_;
        res.set_content("{\"error\":\"boom\"}", "application/json");
        return;
      }
      const auto body = nlohmann::json::parse(req.body);
      batch_sizes_.push_back(body["input"].size());
      nlohmann::json out;
      out["data"] = nlohmann::json::array();
      // Reverse order on the wire; the client must reorder by index.
      for (std::size_t i = body["input"].size(); i-- > 0;) {
        const auto text = body["input"][i].get<std::string>();
        std::vector<float> v(8, 0.0f);
        v[text.size() % 8] = 3.0f;
        v[(text.size() + 1) % 8] = 4.0f;
        out["data"].push_back({{"index", i}, {"embedding", v}});
      }
      res.set_content(out.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeEndpoint() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/embeddings"; }
  int requests() const { return requests_; }
  const std::vector<std::size_t>& batch_sizes() const { return batch_sizes_; }
  const std::string& last_auth() const { return last_auth_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  int fail_status_;
  std::atomic<int> requests_{0};
  std::vector<std::size_t> batch_sizes_;
  std::string last_auth_;
};

ProviderConfig remote_config(const std::string& url) {
  ProviderConfig cfg;
  cfg.kind = ProviderKind::RemoteHttp;
  cfg.endpoint_url = url;
  cfg.api_key_env_var = "STATRAG_TEST_KEY";
  cfg.dimension = 8;
  cfg.backoff_base_ms = 1;
  cfg.timeout_ms = 2000;
  cfg.concurrency = 1;
  return cfg;
}

std::string scope_text(double a, double b) {
  const std::vector<std::string> names{"ax", "ay"};
  std::vector<double> v(16);
  for (std::size_t i = 0; i < 16; ++i) v[i] = (i < 8 ? a : b) * static_cast<double>(i + 1);
  return serialize_scope(Scope::Full, names, v);
}

}  // namespace

TEST_CASE("remote embedder batches and preserves order") {
  ::setenv("STATRAG_TEST_KEY", "sk-test", 1);
  FakeEndpoint endpoint;
  auto cfg = remote_config(endpoint.url());
  cfg.batch_size = 2;
  const std::vector<std::string> texts{"a", "bb", "ccc"};
  const auto out = embed_batch(cfg, texts);
  CHECK(endpoint.requests() == 2);
  CHECK(endpoint.batch_sizes() == std::vector<std::size_t>{2, 1});
  CHECK(endpoint.last_auth() == "Bearer sk-test");
  REQUIRE(out.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(l2_norm(out[i].values) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(out[i].values[texts[i].size() % 8] == doctest::Approx(0.6f));
  }
}

TEST_CASE("remote embedder exhausts retries on HTTP 500") {
  ::setenv("STATRAG_TEST_KEY", "sk-test", 1);
  FakeEndpoint endpoint(500);
  auto cfg = remote_config(endpoint.url());
  cfg.max_retries = 4;
  const std::vector<std::string> texts{"x"};
  CHECK_THROWS_CODE(embed_batch(cfg, texts), ErrorCode::ProviderUnavailable);
  CHECK(endpoint.requests() == 5);
}

TEST_CASE("remote embedder does not retry other 4xx") {
  ::setenv("STATRAG_TEST_KEY", "sk-test", 1);
  FakeEndpoint endpoint(401);
  const std::vector<std::string> texts{"x"};
  CHECK_THROWS_CODE(embed_batch(remote_config(endpoint.url()), texts), ErrorCode::ProviderUnavailable);
  CHECK(endpoint.requests() == 1);
}

TEST_CASE("remote embedder without key") {
  ::unsetenv("STATRAG_TEST_KEY");
  CHECK_THROWS_CODE(RemoteEmbedder(remote_config("http://127.0.0.1:9/v1/embeddings")), ErrorCode::AuthMissing);
}

TEST_CASE("remote embedder rejects overlong text before any request") {
  ::setenv("STATRAG_TEST_KEY", "sk-test", 1);
  FakeEndpoint endpoint;
  auto cfg = remote_config(endpoint.url());
  cfg.max_text_chars = 4;
  const std::vector<std::string> texts{"12345"};
  CHECK_THROWS_CODE(embed_batch(cfg, texts), ErrorCode::TextTooLong);
  CHECK(endpoint.requests() == 0);
}

TEST_CASE("unreachable endpoint is ProviderUnavailable") {
  ::setenv("STATRAG_TEST_KEY", "sk-test", 1);
  auto cfg = remote_config("http://127.0.0.1:1/v1/embeddings");
  cfg.max_retries = 1;
  const std::vector<std::string> texts{"x"};
  CHECK_THROWS_CODE(embed_batch(cfg, texts), ErrorCode::ProviderUnavailable);
}

TEST_CASE("provider config validation") {
  ProviderConfig cfg;
  cfg.batch_size = 0;
  CHECK_THROWS_CODE(cfg.validate(), ErrorCode::ConfigInvalid);
  ProviderConfig remote;
  remote.kind = ProviderKind::RemoteHttp;
  CHECK_THROWS_CODE(remote.validate(), ErrorCode::ConfigInvalid);
}

TEST_CASE("local deterministic embedder") {
  const auto t = scope_text(1.0, -2.0);
  SUBCASE("identity and determinism") {
    const auto a = local_deterministic_embed(t, 256);
    const auto b = local_deterministic_embed(t, 256);
    CHECK(a == b);
    CHECK(cosine(a.values, b.values) == doctest::Approx(1.0));
    CHECK(l2_norm(a.values) == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("no digits") { CHECK_THROWS_CODE(local_deterministic_embed("no numbers here", 64), ErrorCode::NoNumericContent); }
  SUBCASE("dimension lower bound") { CHECK_THROWS_CODE(local_deterministic_embed(t, 4), ErrorCode::ConfigInvalid); }
  SUBCASE("small perturbation, small change") {
    const auto a = local_deterministic_embed(t, 512);
    const auto b = local_deterministic_embed(scope_text(1.0 + 1e-6, -2.0), 512);
    CHECK(std::abs(1.0 - cosine(a.values, b.values)) < 1e-3);
  }
  SUBCASE("batch order follows input order") {
    LocalDeterministicEmbedder e(128);
    std::vector<std::string> texts{scope_text(1, 2), scope_text(3, 4), scope_text(5, -6)};
    const auto fwd = e.embed(texts);
    std::vector<std::string> rev(texts.rbegin(), texts.rend());
    const auto back = e.embed(rev);
    for (std::size_t i = 0; i < 3; ++i) CHECK(fwd[i] == back[2 - i]);
  }
}

TEST_CASE("local embedder separates synthetic classes") {
  const auto data = synth_dataset(3, 20, 3, 40, 7);
  LocalDeterministicEmbedder e(kDefaultEmbeddingDim);
  const auto names = synth_channel_names(3);
  std::vector<std::string> labels;
  std::vector<std::string> texts;
  for (const auto& w : data) {
    if (*w.label == "activity_1") continue;
    texts.push_back(build_bundle(partition_window(w), names).scope(Scope::Full).text);
    labels.push_back(*w.label);
  }
  const auto vecs = e.embed(texts);
  double intra = 0, inter = 0;
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < vecs.size(); ++i) {
    for (std::size_t j = i + 1; j < vecs.size(); ++j) {
      const double c = cosine(vecs[i].values, vecs[j].values);
      if (labels[i] == labels[j]) intra += c, ++n_intra;
      else inter += c, ++n_inter;
    }
  }
  CHECK(intra / static_cast<double>(n_intra) > inter / static_cast<double>(n_inter));
}

TEST_CASE("text hash embedder") {
  TextHashEmbedder e(256);
  const std::vector<std::string> texts{"stair descent", "stair descent", "cycling"};
  const auto v = e.embed(texts);
  CHECK(v[0] == v[1]);
  CHECK(cosine(v[0].values, v[1].values) == doctest::Approx(1.0));
  CHECK(cosine(v[0].values, v[2].values) < 0.99);
}

TEST_CASE("vector helpers") {
  std::vector<float> z(4, 0.0f);
  CHECK_THROWS_CODE(l2_normalize(z), ErrorCode::DimensionMismatch);
  std::vector<float> v{3, 4};
  l2_normalize(v);
  CHECK(v[0] == doctest::Approx(0.6));
  const std::vector<float> a{1, 0}, b{0, 1};
  CHECK(cosine(a, b) == 0.0);
  CHECK(dot(a, a) == 1.0);
}

TEST_CASE("retry helper reports timeouts") {
  httplib::Server slow;
  slow.Post("/", [](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(300));
    res.set_content("{}", "application/json");
  });
  const int port = slow.bind_to_any_port("127.0.0.1");
  std::thread t([&] { slow.listen_after_bind(); });
  slow.wait_until_ready();
  RetryPolicy policy{1, 1, 50};
  CHECK_THROWS_CODE(post_json_with_retry("http://127.0.0.1:" + std::to_string(port) + "/", {}, "{}", policy),
                    ErrorCode::Timeout);
  slow.stop();
  t.join();
}
