#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include "statrag/http.hpp"
#include "statrag/random.hpp"
#include "statrag/usage.hpp"

namespace statrag {

enum class LlmKind : std::uint8_t {
  RemoteChat,
  MockMajority,    // classifier stand-in: modal label of the labeled samples
  MockTemplates,   // optimizer stand-in: seeded instruction variants
  MockDescriptor,  // descriptor stand-in: facets computed from the raw samples
  MockEcho,        // replies with a fixed string
};

std::string_view to_string(LlmKind kind);
LlmKind llm_kind_from_string(std::string_view name);

struct LlmClientConfig {
  LlmKind kind = LlmKind::MockMajority;
  std::string endpoint_url;
  std::string api_key_env_var = "OPENAI_API_KEY";
  std::string model_name = "gpt-5-mini";
  double temperature = 0.0;
  std::uint64_t seed = 0;  // sent to endpoints that support it; seeds mocks
  int max_retries = 5;
  int backoff_base_ms = 500;
  int timeout_ms = 120000;
  std::size_t concurrency = 4;
  std::string echo_reply;  // MockEcho only

  void validate() const;
};

/// A system/user chat completion. Implementations must be safe to call
/// from several threads.
class LlmClient {
 public:
  virtual ~LlmClient() = default;

  virtual std::string complete(std::string_view system, std::string_view user) = 0;
  virtual std::string provider_id() const = 0;
  virtual bool is_local() const = 0;
};

/// Chat-completions endpoint: POST {"model", "messages": [system, user]},
/// reply text at choices[0].message.content.
class RemoteChatClient final : public LlmClient {
 public:
  RemoteChatClient(LlmClientConfig config, std::shared_ptr<UsageLog> usage = {},
                   std::string purpose = "classify");

  std::string complete(std::string_view system, std::string_view user) override;
  std::string provider_id() const override { return "remote/" + config_.model_name; }
  bool is_local() const override { return false; }

 private:
  LlmClientConfig config_;
  std::string api_key_;
  std::shared_ptr<UsageLog> usage_;
  std::string purpose_;
};

/// Parses the labeled-sample blocks out of the user prompt and answers with
/// the modal label; ties go to the larger summed fused score, then to the
/// lexicographically smaller label. Ignores the system text entirely.
class MockMajorityClient final : public LlmClient {
 public:
  explicit MockMajorityClient(std::shared_ptr<UsageLog> usage = {}) : usage_(std::move(usage)) {}

  std::string complete(std::string_view system, std::string_view user) override;
  std::string provider_id() const override { return "mock/majority"; }
  bool is_local() const override { return true; }

 private:
  std::shared_ptr<UsageLog> usage_;
};

/// Composes instructions from a fixed phrase bank. Exploration draws fresh
/// combinations; Combination splices the two fittest parents and mutates one
/// clause; Refinement rewrites the fittest parent's wording. Calls are
/// serialized so a seeded run is reproducible.
class MockTemplatesClient final : public LlmClient {
 public:
  explicit MockTemplatesClient(std::uint64_t seed, std::shared_ptr<UsageLog> usage = {});

  std::string complete(std::string_view system, std::string_view user) override;
  std::string provider_id() const override { return "mock/templates"; }
  bool is_local() const override { return true; }

 private:
  std::mutex mutex_;
  Rng rng_;
  std::shared_ptr<UsageLog> usage_;
};

/// Reads the raw sample block of a descriptor prompt and writes the four
/// sections with facets derived from the samples themselves.
class MockDescriptorClient final : public LlmClient {
 public:
  explicit MockDescriptorClient(std::shared_ptr<UsageLog> usage = {}) : usage_(std::move(usage)) {}

  std::string complete(std::string_view system, std::string_view user) override;
  std::string provider_id() const override { return "mock/descriptor"; }
  bool is_local() const override { return true; }

 private:
  std::shared_ptr<UsageLog> usage_;
};

class MockEchoClient final : public LlmClient {
 public:
  explicit MockEchoClient(std::string reply, std::shared_ptr<UsageLog> usage = {})
      : reply_(std::move(reply)), usage_(std::move(usage)) {}

  std::string complete(std::string_view system, std::string_view user) override;
  std::string provider_id() const override { return "mock/echo"; }
  bool is_local() const override { return true; }

 private:
  std::string reply_;
  std::shared_ptr<UsageLog> usage_;
};

/// Adapts a callable; handy for scripted test doubles.
class FunctionClient final : public LlmClient {
 public:
  using Fn = std::function<std::string(std::string_view system, std::string_view user)>;

  explicit FunctionClient(Fn fn, std::string id = "mock/function")
      : fn_(std::move(fn)), id_(std::move(id)) {}

  std::string complete(std::string_view system, std::string_view user) override {
    return fn_(system, user);
  }
  std::string provider_id() const override { return id_; }
  bool is_local() const override { return true; }

 private:
  Fn fn_;
  std::string id_;
};

std::unique_ptr<LlmClient> make_llm_client(const LlmClientConfig& config,
                                           std::shared_ptr<UsageLog> usage = {},
                                           std::string purpose = "classify");

}  // namespace statrag
