#include "ragutil/genclient.hpp"

#include <cctype>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "ragutil/error.hpp"
#include "ragutil/hash.hpp"
#include "ragutil/log.hpp"

namespace ragutil {

using nlohmann::json;

namespace {

bool word_byte(unsigned char c) { return std::isalnum(c) != 0 || c == '_' || c >= 0x80; }

}  // namespace

std::string strip_stop(std::string_view raw) {
  constexpr std::string_view kMarker = "STOP";
  std::size_t pos = 0;
  std::size_t cut = raw.size();
  while ((pos = raw.find(kMarker, pos)) != std::string_view::npos) {
    const bool left_ok = pos == 0 || !word_byte(static_cast<unsigned char>(raw[pos - 1]));
    const std::size_t end = pos + kMarker.size();
    const bool right_ok = end == raw.size() || !word_byte(static_cast<unsigned char>(raw[end]));
    if (left_ok && right_ok) {
      cut = pos;
      break;
    }
    pos = end;
  }
  std::string_view kept = raw.substr(0, cut);
  while (!kept.empty() && std::isspace(static_cast<unsigned char>(kept.back()))) kept.remove_suffix(1);
  return std::string(kept);
}

std::string mock_truncating_generator(const std::vector<std::string>& context, std::size_t m) {
  if (m == 0 || context.empty()) return std::string(kCannedAnswer);
  std::string out;
  for (std::size_t i = 0; i < m && i < context.size(); ++i) {
    if (i > 0) out += ' ';
    out += context[i];
  }
  return out;
}

std::vector<std::string> extract_context_passages(std::string_view prompt) {
  std::vector<std::string> passages;
  std::size_t start = 0;
  while (start <= prompt.size()) {
    auto end = prompt.find('\n', start);
    if (end == std::string_view::npos) end = prompt.size();
    const auto line = prompt.substr(start, end - start);
    const std::string expected = "Context " + std::to_string(passages.size() + 1) + ": ";
    if (line.starts_with(expected)) passages.emplace_back(line.substr(expected.size()));
    start = end + 1;
  }
  return passages;
}

std::string MockTruncatingBackend::complete(const GenRequest& request) {
  return mock_truncating_generator(extract_context_passages(request.prompt), m_) + " STOP";
}

HttpGenerationBackend::HttpGenerationBackend(HttpEndpoint endpoint, std::string model_id)
    : endpoint_(std::move(endpoint)), model_id_(std::move(model_id)) {}

std::string HttpGenerationBackend::complete(const GenRequest& request) {
  json body = {{"prompt", request.prompt},
               {"max_tokens", request.max_new_tokens},
               {"seed", request.seed}};
  if (request.temperature) body["temperature"] = *request.temperature;
  const std::string payload = body.dump();

  httplib::Client client(endpoint_.base_url);
  client.set_connection_timeout(endpoint_.timeout);
  client.set_read_timeout(endpoint_.timeout);
  httplib::Headers headers;
  if (!endpoint_.auth_token.empty()) headers.emplace("Authorization", "Bearer " + endpoint_.auth_token);

  auto backoff = endpoint_.retry.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= endpoint_.retry.max_attempts; ++attempt) {
    auto res = client.Post(endpoint_.path, headers, payload, "application/json");
    if (res && res->status == 200) {
      json reply;
      try {
        reply = json::parse(res->body);
      } catch (const json::exception& e) {
        throw ProtocolError(std::string("generation reply is not JSON: ") + e.what());
      }
      if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string()) {
        throw ProtocolError("generation reply lacks string field 'text'");
      }
      return reply["text"].get<std::string>();
    }
    if (res && res->status >= 400 && res->status < 500 && res->status != 429) {
      throw ProtocolError("generation endpoint returned HTTP " + std::to_string(res->status) + ": " +
                          res->body);
    }
    last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
    if (attempt < endpoint_.retry.max_attempts) {
      log::warn("generation attempt {} failed ({}); retrying in {} ms", attempt, last_error,
                backoff.count());
      std::this_thread::sleep_for(backoff);
      backoff = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(backoff.count()) * endpoint_.retry.multiplier));
    }
  }
  throw TransientError("generation endpoint " + endpoint_.base_url + endpoint_.path + " failed after " +
                       std::to_string(endpoint_.retry.max_attempts) + " attempts: " + last_error);
}

std::string cache_key(const GenRequest& request, std::string_view model_id) {
  json key = json::array({request.prompt, model_id,
                          request.temperature ? json(*request.temperature) : json(nullptr),
                          request.seed, request.run_index});
  return sha256_hex(key.dump());
}

namespace {

json record_to_json(const std::string& key, const GenRecord& r) {
  return json{{"key", key},           {"model_id", r.model_id}, {"run_index", r.run_index},
              {"raw_text", r.raw_text}, {"latency_ms", r.latency_ms}};
}

GenRecord record_from_raw(std::string raw, std::string model_id, int run_index, double latency) {
  GenRecord r;
  r.answer_text = strip_stop(raw);
  r.empty_answer = r.answer_text.empty();
  r.raw_text = std::move(raw);
  r.model_id = std::move(model_id);
  r.run_index = run_index;
  r.latency_ms = latency;
  return r;
}

}  // namespace

GenCache::GenCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      auto rec = record_from_raw(j.at("raw_text").get<std::string>(), j.at("model_id").get<std::string>(),
                                 j.at("run_index").get<int>(), j.at("latency_ms").get<double>());
      entries_.insert_or_assign(j.at("key").get<std::string>(), std::move(rec));
    } catch (const json::exception&) {
      ++skipped_;
      log::warn("{}:{}: skipping corrupt cache line", path_.string(), line_no);
    }
  }
}

std::optional<GenRecord> GenCache::find(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void GenCache::store(const std::string& key, const GenRecord& record) {
  std::lock_guard lock(mutex_);
  entries_.insert_or_assign(key, record);
  if (path_.empty()) return;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw DataError("cannot append to cache " + path_.string());
  out << record_to_json(key, record).dump() << '\n';
}

std::size_t GenCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

GenRecord GenClient::generate(const GenRequest& request) {
  const auto model = backend_.model_id();
  const auto key = cache_key(request, model);
  if (auto hit = cache_.find(key)) return *hit;
  const auto t0 = std::chrono::steady_clock::now();
  ++calls_;
  auto raw = backend_.complete(request);
  const std::chrono::duration<double, std::milli> dt = std::chrono::steady_clock::now() - t0;
  auto record = record_from_raw(std::move(raw), model, request.run_index, dt.count());
  cache_.store(key, record);
  return record;
}

std::vector<GenRecord> GenClient::generate_n(const GenRequest& base, int n) {
  if (n < 1) throw UsageError("n_runs must be >= 1");
  std::vector<GenRequest> requests;
  requests.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    GenRequest r = base;
    r.run_index = i;
    r.seed = base.seed + i;
    requests.push_back(std::move(r));
  }
  return generate_all(requests, 1);
}

std::vector<GenRecord> GenClient::generate_all(const std::vector<GenRequest>& requests,
                                               int concurrency) {
  std::vector<GenRecord> out(requests.size());
  if (concurrency <= 1 || requests.size() <= 1) {
    for (std::size_t i = 0; i < requests.size(); ++i) out[i] = generate(requests[i]);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::atomic<bool> stop{false};
  auto worker = [&] {
    for (;;) {
      if (stop) return;
      const auto i = next++;
      if (i >= requests.size()) return;
      try {
        out[i] = generate(requests[i]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        stop = true;
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(concurrency), requests.size());
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace ragutil
