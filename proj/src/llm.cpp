#include "statrag/llm.hpp"

#include "json.hpp"
#include "statrag/error.hpp"

namespace statrag {

std::string_view to_string(LlmKind kind) {
  switch (kind) {
    case LlmKind::RemoteChat: return "remote_chat";
    case LlmKind::MockMajority: return "mock_majority";
    case LlmKind::MockTemplates: return "mock_templates";
    case LlmKind::MockDescriptor: return "mock_descriptor";
    case LlmKind::MockEcho: return "mock_echo";
  }
  return "unknown";
}

LlmKind llm_kind_from_string(std::string_view name) {
  for (auto kind : {LlmKind::RemoteChat, LlmKind::MockMajority, LlmKind::MockTemplates,
                    LlmKind::MockDescriptor, LlmKind::MockEcho}) {
    if (to_string(kind) == name) return kind;
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown llm kind '" + std::string(name) + "'");
}

void LlmClientConfig::validate() const {
  if (kind == LlmKind::RemoteChat && endpoint_url.empty()) {
    throw Error(ErrorCode::ConfigInvalid, "remote chat client requires endpoint_url");
  }
  if (max_retries < 0 || timeout_ms <= 0) {
    throw Error(ErrorCode::ConfigInvalid, "max_retries must be >= 0 and timeout_ms > 0");
  }
  if (concurrency < 1) throw Error(ErrorCode::ConfigInvalid, "llm concurrency must be >= 1");
}

RemoteChatClient::RemoteChatClient(LlmClientConfig config, std::shared_ptr<UsageLog> usage,
                                   std::string purpose)
    : config_(std::move(config)), usage_(std::move(usage)), purpose_(std::move(purpose)) {
  config_.validate();
  api_key_ = read_api_key(config_.api_key_env_var);
}

std::string RemoteChatClient::complete(std::string_view system, std::string_view user) {
  nlohmann::json body;
  body["model"] = config_.model_name;
  body["messages"] = nlohmann::json::array({
      {{"role", "system"}, {"content", std::string(system)}},
      {{"role", "user"}, {"content", std::string(user)}},
  });
  // Most deterministic decoding the endpoint will accept.
  body["temperature"] = config_.temperature;
  body["seed"] = config_.seed;

  RetryPolicy policy{config_.max_retries, config_.backoff_base_ms, config_.timeout_ms};
  const std::string reply = post_json_with_retry(
      config_.endpoint_url, {{"Authorization", "Bearer " + api_key_}}, body.dump(), policy);

  std::string content;
  try {
    const auto parsed = nlohmann::json::parse(reply);
    content = parsed.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ProviderUnavailable, std::string("unexpected chat reply shape: ") + e.what());
  }
  if (usage_) {
    usage_->record({RequestKind::Chat, provider_id(), false, system.size() + user.size(),
                    content.size(), purpose_});
  }
  return content;
}

std::string MockEchoClient::complete(std::string_view system, std::string_view user) {
  if (usage_) {
    usage_->record({RequestKind::Chat, provider_id(), true, system.size() + user.size(),
                    reply_.size(), "echo"});
  }
  return reply_;
}

std::unique_ptr<LlmClient> make_llm_client(const LlmClientConfig& config,
                                           std::shared_ptr<UsageLog> usage, std::string purpose) {
  config.validate();
  switch (config.kind) {
    case LlmKind::RemoteChat:
      return std::make_unique<RemoteChatClient>(config, std::move(usage), std::move(purpose));
    case LlmKind::MockMajority: return std::make_unique<MockMajorityClient>(std::move(usage));
    case LlmKind::MockTemplates:
      return std::make_unique<MockTemplatesClient>(config.seed, std::move(usage));
    case LlmKind::MockDescriptor: return std::make_unique<MockDescriptorClient>(std::move(usage));
    case LlmKind::MockEcho: return std::make_unique<MockEchoClient>(config.echo_reply, std::move(usage));
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown llm kind");
}

}  // namespace statrag
