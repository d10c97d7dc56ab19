#include "httplib.h"

#include "statrag/http.hpp"

#include <cstdlib>
#include <thread>

#include "statrag/error.hpp"

namespace statrag {

namespace {

struct ParsedUrl {
  std::string scheme_host_port;  // e.g. https://api.example.com:443
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::ConfigInvalid, "endpoint URL lacks a scheme: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

HttpResponse http_post_json(const std::string& url, const HeaderList& headers,
                            const std::string& body, std::chrono::milliseconds timeout) {
  const auto parsed = split_url(url);
  httplib::Client client(parsed.scheme_host_port);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers hdrs;
  for (const auto& [k, v] : headers) hdrs.emplace(k, v);

  HttpResponse out;
  auto res = client.Post(parsed.path, hdrs, body, "application/json");
  if (!res) {
    const auto err = res.error();
    out.timed_out = err == httplib::Error::Read || err == httplib::Error::Write ||
                    err == httplib::Error::ConnectionTimeout;
    out.transport_error = httplib::to_string(err);
    return out;
  }
  out.status = res->status;
  out.body = res->body;
  return out;
}

bool http_reachable(const std::string& url, std::chrono::milliseconds timeout) {
  const auto parsed = split_url(url);
  httplib::Client client(parsed.scheme_host_port);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  return static_cast<bool>(client.Head(parsed.path));
}

std::string post_json_with_retry(const std::string& url, const HeaderList& headers,
                                 const std::string& body, const RetryPolicy& policy) {
  const int attempts = 1 + std::max(0, policy.max_retries);
  bool all_timeouts = true;
  std::string last_error;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      const auto delay = static_cast<long long>(policy.backoff_base_ms) << std::min(attempt - 1, 16);
      std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    }
    const auto res = http_post_json(url, headers, body, std::chrono::milliseconds(policy.timeout_ms));
    if (res.status >= 200 && res.status < 300) return res.body;
    if (res.status == 0) {
      all_timeouts = all_timeouts && res.timed_out;
      last_error = res.transport_error;
      continue;
    }
    all_timeouts = false;
    last_error = "HTTP " + std::to_string(res.status);
    const bool retryable = res.status == 429 || res.status >= 500;
    if (!retryable) break;
  }
  if (all_timeouts) throw Error(ErrorCode::Timeout, url + ": " + last_error);
  throw Error(ErrorCode::ProviderUnavailable, url + ": " + last_error);
}

std::string read_api_key(const std::string& env_var) {
  if (env_var.empty()) throw Error(ErrorCode::AuthMissing, "no API key variable configured");
  const char* value = std::getenv(env_var.c_str());
  if (value == nullptr || *value == '\0') {
    throw Error(ErrorCode::AuthMissing, "environment variable " + env_var + " is not set");
  }
  return value;
}

}  // namespace statrag
