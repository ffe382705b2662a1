#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>

#include "json.hpp"
#include "lmtree/analyst.hpp"

namespace lmtree {

/// Token bucket shared by all request threads of one analyst.
class RateLimiter {
 public:
  RateLimiter(double per_second, double burst);
  /// Blocks until a token is available.
  void acquire();

 private:
  using Clock = std::chrono::steady_clock;
  std::mutex mutex_;
  double rate_;
  double capacity_;
  double tokens_;
  Clock::time_point last_;
};

struct RemoteOptions {
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string model;
  std::string api_key;
  std::size_t sample_size = 10;
  std::size_t body_truncation = 1500;
  int max_retries = 3;
  double requests_per_second = 5.0;
  std::size_t max_in_flight = 4;
  double timeout_seconds = 60.0;
  std::chrono::milliseconds backoff{200};
  std::filesystem::path cache_path;  // empty: no cache file
};

/// Truncates to at most `limit` bytes without splitting a UTF-8 sequence.
std::string truncate_utf8(const std::string& text, std::size_t limit);

/// Parses the model's answer to a split question. Accepts bare JSON or JSON
/// inside a fenced block. Returns nullopt for an explicit "no attribute"
/// answer and throws std::invalid_argument when the answer is malformed.
std::optional<SplitProposal> parse_proposal_content(const std::string& content);

/// Chat-completions client acting as the analyst.
class RemoteAnalyst final : public Analyst {
 public:
  explicit RemoteAnalyst(RemoteOptions options);

  std::optional<SplitProposal> propose_split(std::span<const PublicItem> high,
                                             std::span<const PublicItem> low) override;
  std::vector<Annotation> annotate(std::span<const PublicItem> items,
                                   const AttributeSpec& attribute) override;
  std::size_t sample_limit() const override { return options_.sample_size; }
  std::string name() const override { return "remote"; }

  std::size_t http_requests() const { return http_requests_; }
  std::size_t cache_hits() const { return cache_hits_; }

 private:
  enum class CallStatus { Ok, Transport };
  struct CallResult {
    CallStatus status = CallStatus::Ok;
    std::string content;
    std::string error;
  };

  /// One chat completion with retries on transport errors, 429 and 5xx.
  CallResult chat(const std::string& system, const std::string& user);
  std::optional<Annotation> annotate_one(const PublicItem& item, const AttributeSpec& attribute,
                                         bool& transport_failure);
  void load_cache();
  void append_cache(const Annotation& annotation);

  RemoteOptions options_;
  std::string host_;  // scheme://host[:port]
  std::string path_;  // .../chat/completions
  RateLimiter limiter_;
  AnnotationStore cache_;
  std::mutex cache_mutex_;
  std::mutex stats_mutex_;
  std::size_t http_requests_ = 0;
  std::size_t cache_hits_ = 0;
};

}  // namespace lmtree
