#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace statrag {

struct HttpResponse {
  int status = 0;       // 0 when no response was received
  std::string body;
  bool timed_out = false;
  std::string transport_error;
};

struct RetryPolicy {
  int max_retries = 5;
  int backoff_base_ms = 200;
  int timeout_ms = 60000;
};

using HeaderList = std::vector<std::pair<std::string, std::string>>;

/// Single JSON POST over http:// or https://.
HttpResponse http_post_json(const std::string& url, const HeaderList& headers,
                            const std::string& body, std::chrono::milliseconds timeout);

/// POSTs with exponential backoff (base * 2^attempt) on transport errors,
/// 429 and 5xx. Other 4xx fail immediately. After 1 + max_retries attempts
/// throws Error(Timeout) if every failure was a timeout, else
/// Error(ProviderUnavailable).
std::string post_json_with_retry(const std::string& url, const HeaderList& headers,
                                 const std::string& body, const RetryPolicy& policy);

/// True if the endpoint's host answers an HTTP HEAD with any status.
/// Sends no body and no credentials.
bool http_reachable(const std::string& url, std::chrono::milliseconds timeout);

/// Reads an API key from the named environment variable or throws Error(AuthMissing).
std::string read_api_key(const std::string& env_var);

}  // namespace statrag
