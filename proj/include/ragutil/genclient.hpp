#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ragutil {

struct GenRequest {
  std::string prompt;
  int max_new_tokens = 256;
  std::optional<double> temperature;  // unset: server default
  std::int64_t seed = 0;
  int run_index = 0;
};

struct GenRecord {
  std::string raw_text;
  std::string answer_text;
  std::string model_id;
  int run_index = 0;
  double latency_ms = 0.0;
  bool empty_answer = false;
};

// Truncates at the first standalone "STOP" (not part of a longer word) and trims
// trailing whitespace. Idempotent.
std::string strip_stop(std::string_view raw_text);

// Test double: concatenates the first m context passages (space separated) and
// ignores the rest; m == 0 or an empty context yields kCannedAnswer.
inline constexpr std::string_view kCannedAnswer =
    "Based on general knowledge, the answer to this question depends on a number of factors, and "
    "it is usually described as the result of several things that happen over time in the way that "
    "most people would expect, which is why it is important to look at the details of each case";
std::string mock_truncating_generator(const std::vector<std::string>& context, std::size_t m);

// Pulls the `Context i:` passage bodies back out of a rendered prompt.
std::vector<std::string> extract_context_passages(std::string_view prompt);

// One completion per call. Implementations throw TransientError when the endpoint
// cannot be reached and ProtocolError on a malformed reply.
class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual std::string model_id() const = 0;
  virtual std::string complete(const GenRequest& request) = 0;
};

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds initial_backoff{200};
  double multiplier = 2.0;
};

struct HttpEndpoint {
  std::string base_url;  // scheme://host:port
  std::string path = "/generate";
  std::string auth_token;  // sent as `Authorization: Bearer ...` when non-empty
  std::chrono::seconds timeout{120};
  RetryPolicy retry;
};

// POST {prompt, max_tokens, temperature?, seed} -> {text}.
class HttpGenerationBackend : public GenerationBackend {
 public:
  HttpGenerationBackend(HttpEndpoint endpoint, std::string model_id);
  std::string model_id() const override { return model_id_; }
  std::string complete(const GenRequest& request) override;

 private:
  HttpEndpoint endpoint_;
  std::string model_id_;
};

// In-process endpoint that runs mock_truncating_generator over the prompt's
// passages and terminates the answer with STOP.
class MockTruncatingBackend : public GenerationBackend {
 public:
  explicit MockTruncatingBackend(std::size_t m) : m_(m) {}
  std::string model_id() const override { return "mock-truncating-m" + std::to_string(m_); }
  std::string complete(const GenRequest& request) override;

 private:
  std::size_t m_;
};

std::string cache_key(const GenRequest& request, std::string_view model_id);

// Append-only JSONL cache. One writer at a time; corrupt lines are skipped with a
// warning on load.
class GenCache {
 public:
  GenCache() = default;  // in-memory only
  explicit GenCache(std::filesystem::path path);

  std::optional<GenRecord> find(const std::string& key) const;
  void store(const std::string& key, const GenRecord& record);
  std::size_t size() const;
  std::size_t skipped_lines() const noexcept { return skipped_; }

 private:
  std::filesystem::path path_;
  std::unordered_map<std::string, GenRecord> entries_;
  std::size_t skipped_ = 0;
  mutable std::mutex mutex_;
};

class GenClient {
 public:
  GenClient(GenerationBackend& backend, GenCache& cache) : backend_(backend), cache_(cache) {}

  GenRecord generate(const GenRequest& request);

  // n records, run_index 0..n-1, seeds base_seed + run_index.
  std::vector<GenRecord> generate_n(const GenRequest& base, int n);

  // Runs all requests with at most `concurrency` in flight; output order matches input.
  std::vector<GenRecord> generate_all(const std::vector<GenRequest>& requests, int concurrency);

  std::size_t backend_calls() const noexcept { return calls_.load(); }

 private:
  GenerationBackend& backend_;
  GenCache& cache_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace ragutil
