#pragma once

#include <cstddef>
#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

namespace statrag {

enum class RequestKind : std::uint8_t { Embedding, Chat };

/// One provider request as seen by the client. Local and mock providers
/// log too, flagged so pricing can zero them out.
struct UsageRecord {
  RequestKind kind = RequestKind::Chat;
  std::string provider_id;
  bool local = false;
  std::size_t chars_in = 0;
  std::size_t chars_out = 0;
  std::string purpose;  // e.g. "classify", "optimize", "describe"
};

/// Append-only, thread-safe request log shared by clients.
class UsageLog {
 public:
  void record(UsageRecord rec) {
    std::lock_guard lock(mutex_);
    records_.push_back(std::move(rec));
  }

  std::vector<UsageRecord> snapshot() const {
    std::lock_guard lock(mutex_);
    return records_;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::vector<UsageRecord> records_;
};

}  // namespace statrag
