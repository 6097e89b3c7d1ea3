// Copyright 2026 The causaltext Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CAUSALTEXT_LLM_HPP
#define CAUSALTEXT_LLM_HPP

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "causaltext/error.hpp"
#include "causaltext/graph.hpp"
#include "causaltext/linearize.hpp"
#include "causaltext/util.hpp"

namespace causaltext::llm {

inline constexpr std::string_view kApiKeyEnv = "CAUSALTEXT_API_KEY";

struct CompletionRequest {
  std::string model;
  std::string prompt;
  double temperature = 0.6;
  std::size_t max_tokens = 256;
  std::string stop;  // empty: no stop sequence

  void validate() const {
    if (prompt.empty()) throw Error("E_REQUEST", "completion prompt is empty");
    if (max_tokens < 1) throw Error("E_REQUEST", "max_tokens must be at least 1");
    if (!(temperature >= 0.0 && temperature <= 2.0))
      throw Error("E_REQUEST", "temperature must lie in [0, 2]");
  }
};

enum class FinishReason { Stop, Length, Error };

inline std::string_view finish_reason_name(FinishReason r) {
  switch (r) {
    case FinishReason::Stop: return "stop";
    case FinishReason::Length: return "length";
    default: return "error";
  }
}

inline FinishReason parse_finish_reason(std::string_view s) {
  if (s == "stop") return FinishReason::Stop;
  if (s == "length") return FinishReason::Length;
  return FinishReason::Error;
}

struct CompletionResponse {
  std::string text;
  FinishReason finish_reason = FinishReason::Stop;
  double latency_ms = 0.0;
  std::string backend;
  std::size_t attempts = 1;
  bool from_cache = false;
};

/// Trims surrounding whitespace and cuts the text at the first stop
/// sequence.
inline std::string postprocess(std::string_view raw, std::string_view stop) {
  if (!stop.empty()) {
    // The stop sequence itself may start with whitespace, so search before
    // trimming.
    auto body = raw;
    const auto lead = body.find_first_not_of(" \t\r\n");
    if (lead != std::string_view::npos) body.remove_prefix(lead);
    if (auto at = body.find(stop); at != std::string_view::npos) body = body.substr(0, at);
    return std::string(trim(body));
  }
  return std::string(trim(raw));
}

class Backend {
 public:
  virtual ~Backend() = default;
  virtual CompletionResponse complete(const CompletionRequest& request) = 0;
  virtual std::string name() const = 0;
};

// ---------------------------------------------------------------------------
// Template baseline

/// One "A increases/decreases B." sentence per edge, in edge order.
inline std::string template_generate(const Component& component) {
  std::string out;
  for (const auto& e : component.edges()) {
    if (!out.empty()) out += ' ';
    out += e.source;
    out += e.polarity == Polarity::Positive ? " increases " : " decreases ";
    out += e.target;
    out += '.';
  }
  return out;
}

/// NoTags input carries no sign, so the verb is the neutral "affects".
inline std::string template_generate(const ParsedLinearization& parsed) {
  if (parsed.mode.has_tags()) return template_generate(parsed.component());
  std::string out;
  for (const auto& e : parsed.edges) {
    if (!out.empty()) out += ' ';
    out += e.source + " affects " + e.target + ".";
  }
  return out;
}

/// The last `<S> ... <E>` span of a prompt, which is the test query in every
/// prompt layout the toolkit builds.
inline std::string extract_query(std::string_view prompt) {
  const auto end = prompt.rfind("<E>");
  if (end == std::string_view::npos) throw Error("E_NO_QUERY", "prompt has no <E> tag");
  const auto start = prompt.rfind("<S>", end);
  if (start == std::string_view::npos) throw Error("E_NO_QUERY", "prompt has no <S> tag");
  return std::string(prompt.substr(start, end + 3 - start));
}

class TemplateBackend final : public Backend {
 public:
  CompletionResponse complete(const CompletionRequest& request) override {
    request.validate();
    const auto started = std::chrono::steady_clock::now();
    CompletionResponse r;
    r.text = template_generate(parse_linearized(extract_query(request.prompt)));
    r.finish_reason = FinishReason::Stop;
    r.backend = name();
    r.latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return r;
  }
  std::string name() const override { return "template"; }
};

// ---------------------------------------------------------------------------
// Replay cache

inline std::string request_hash(const CompletionRequest& request) {
  const nlohmann::json key = {request.model, request.prompt, format_real(request.temperature),
                              request.max_tokens};
  return sha256_hex(key.dump());
}

/// Append-only, content-addressed record of completions, one JSON object per
/// line. Reads are concurrent; writes are serialized.
class ReplayCache {
 public:
  struct Entry {
    std::string text;
    FinishReason finish_reason = FinishReason::Stop;
    std::string backend;
  };

  ReplayCache() = default;  // in-memory only

  explicit ReplayCache(std::filesystem::path path) : path_(std::move(path)) {
    std::ifstream in(path_);
    std::string line;
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        entries_[j.at("request_hash").get<std::string>()] = {
            j.at("text").get<std::string>(),
            parse_finish_reason(j.value("finish_reason", "stop")),
            j.value("backend", "")};
      } catch (const nlohmann::json::exception&) {
        ++skipped_;  // torn final write
      }
    }
  }

  std::optional<Entry> lookup(const CompletionRequest& request) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(request_hash(request));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void record(const CompletionRequest& request, const CompletionResponse& response) {
    const auto hash = request_hash(request);
    std::lock_guard lock(mutex_);
    if (entries_.contains(hash)) return;
    entries_[hash] = {response.text, response.finish_reason, response.backend};
    if (path_.empty()) return;
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::app);
    const nlohmann::json j = {{"request_hash", hash},
                              {"model", request.model},
                              {"prompt", request.prompt},
                              {"temperature", request.temperature},
                              {"max_tokens", request.max_tokens},
                              {"text", response.text},
                              {"finish_reason", finish_reason_name(response.finish_reason)},
                              {"backend", response.backend}};
    out << j.dump() << '\n';
    if (!out) throw Error("E_IO", "cannot append to replay cache " + path_.string());
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }
  std::size_t skipped_lines() const { return skipped_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::map<std::string, Entry> entries_;
  std::size_t skipped_ = 0;
  mutable std::mutex mutex_;
};

class ReplayBackend final : public Backend {
 public:
  explicit ReplayBackend(const ReplayCache& cache) : cache_(cache) {}

  CompletionResponse complete(const CompletionRequest& request) override {
    request.validate();
    auto hit = cache_.lookup(request);
    if (!hit)
      throw Error("E_REPLAY_MISS", "no cached completion for request " + request_hash(request).substr(0, 12));
    CompletionResponse r;
    r.text = hit->text;
    r.finish_reason = hit->finish_reason;
    r.backend = name();
    r.from_cache = true;
    return r;
  }
  std::string name() const override { return "replay"; }

 private:
  const ReplayCache& cache_;
};

// ---------------------------------------------------------------------------
// Remote OpenAI-compatible endpoint

struct RetryPolicy {
  std::size_t max_attempts = 5;
  std::chrono::milliseconds initial_delay{1000};
  std::chrono::milliseconds max_delay{32000};
  double multiplier = 2.0;
  std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  };

  /// Delay before retry number `retry` (1-based).
  std::chrono::milliseconds delay(std::size_t retry) const {
    double ms = static_cast<double>(initial_delay.count()) *
                std::pow(multiplier, static_cast<double>(retry - 1));
    ms = std::min(ms, static_cast<double>(max_delay.count()));
    return std::chrono::milliseconds(static_cast<long long>(ms));
  }

  static bool retryable_status(int status) { return status == 429 || status >= 500; }
};

struct RemoteConfig {
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string api_key;
  std::chrono::seconds timeout{60};
  RetryPolicy retry;

  static RemoteConfig from_env(std::string base_url) {
    const char* key = std::getenv(std::string(kApiKeyEnv).c_str());
    if (key == nullptr || *key == '\0')
      throw Error("E_AUTH", "remote backend needs " + std::string(kApiKeyEnv) + " in the environment");
    return {std::move(base_url), key, std::chrono::seconds(60), {}};
  }
};

class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(RemoteConfig config) : config_(std::move(config)) {
    if (config_.api_key.empty())
      throw Error("E_AUTH", "remote backend needs " + std::string(kApiKeyEnv));
    const auto scheme_end = config_.base_url.find("://");
    if (scheme_end == std::string::npos)
      throw Error("E_URL", "base URL needs a scheme: " + config_.base_url);
    const auto path_start = config_.base_url.find('/', scheme_end + 3);
    origin_ = config_.base_url.substr(0, path_start);
    path_ = path_start == std::string::npos ? std::string() : config_.base_url.substr(path_start);
    while (!path_.empty() && path_.back() == '/') path_.pop_back();
    path_ += "/completions";
  }

  CompletionResponse complete(const CompletionRequest& request) override {
    request.validate();
    nlohmann::json body = {{"model", request.model},
                           {"prompt", request.prompt},
                           {"temperature", request.temperature},
                           {"max_tokens", request.max_tokens}};
    if (!request.stop.empty()) body["stop"] = request.stop;
    const auto payload = body.dump();
    const httplib::Headers headers = {{"Authorization", "Bearer " + config_.api_key}};
    const auto started = std::chrono::steady_clock::now();

    std::string last_error;
    for (std::size_t attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
      if (attempt > 1) config_.retry.sleep(config_.retry.delay(attempt - 1));
      httplib::Client client(origin_);
      client.set_connection_timeout(config_.timeout);
      client.set_read_timeout(config_.timeout);
      client.set_write_timeout(config_.timeout);
      auto res = client.Post(path_, headers, payload, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (RetryPolicy::retryable_status(res->status)) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status < 200 || res->status >= 300)
        throw Error("E_REMOTE_HTTP", "completion endpoint returned HTTP " + std::to_string(res->status) +
                                         ": " + res->body.substr(0, 200));
      CompletionResponse r;
      try {
        const auto j = nlohmann::json::parse(res->body);
        const auto& choice = j.at("choices").at(0);
        r.text = postprocess(choice.at("text").get<std::string>(), request.stop);
        r.finish_reason = parse_finish_reason(choice.value("finish_reason", "stop"));
      } catch (const nlohmann::json::exception& e) {
        throw Error("E_REMOTE_BODY", std::string("unexpected completion body: ") + e.what());
      }
      r.backend = name();
      r.attempts = attempt;
      r.latency_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
      return r;
    }
    throw Error("E_RETRY_EXHAUSTED", "gave up after " + std::to_string(config_.retry.max_attempts) +
                                         " attempts (" + last_error + ")");
  }

  std::string name() const override { return "remote"; }

 private:
  RemoteConfig config_;
  std::string origin_;
  std::string path_;
};

// ---------------------------------------------------------------------------
// Client: cache-first dispatch with bounded concurrency

struct Outcome {
  std::optional<CompletionResponse> response;
  std::string error_code;
  std::string error_message;
};

class Client {
 public:
  Client(Backend& backend, ReplayCache* cache = nullptr, std::size_t max_in_flight = 4)
      : backend_(backend), cache_(cache), max_in_flight_(std::max<std::size_t>(1, max_in_flight)) {}

  CompletionResponse complete(const CompletionRequest& request) {
    request.validate();
    if (cache_) {
      if (auto hit = cache_->lookup(request)) {
        CompletionResponse r;
        r.text = hit->text;
        r.finish_reason = hit->finish_reason;
        r.backend = hit->backend;
        r.from_cache = true;
        return r;
      }
    }
    auto response = backend_.complete(request);
    if (cache_ && response.finish_reason != FinishReason::Error && !response.from_cache)
      cache_->record(request, response);
    return response;
  }

  /// Results line up with `requests`; failures are captured per request.
  std::vector<Outcome> complete_all(const std::vector<CompletionRequest>& requests) {
    std::vector<Outcome> out(requests.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < requests.size(); i = next++) {
        try {
          out[i].response = complete(requests[i]);
        } catch (const Error& e) {
          out[i].error_code = e.code();
          out[i].error_message = e.what();
        } catch (const std::exception& e) {
          out[i].error_code = "E_INTERNAL";
          out[i].error_message = e.what();
        }
      }
    };
    const auto n = std::min(max_in_flight_, requests.size());
    if (n <= 1) {
      worker();
      return out;
    }
    {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    }
    return out;
  }

 private:
  Backend& backend_;
  ReplayCache* cache_;
  std::size_t max_in_flight_;
};

}  // namespace causaltext::llm

#endif  // CAUSALTEXT_LLM_HPP
