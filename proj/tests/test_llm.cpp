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

#include <atomic>
#include <filesystem>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "causaltext/llm.hpp"
#include "support.hpp"

namespace causaltext::llm {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("causaltext_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

CompletionRequest request(std::string prompt, double temperature = 0.6) {
  CompletionRequest r;
  r.model = "davinci";
  r.prompt = std::move(prompt);
  r.temperature = temperature;
  return r;
}

TEST(Template, FromPrompt) {
  TemplateBackend backend;
  EXPECT_EQ(backend.complete(request("prompt: <S> <H> A <POS> <T> B <E>\ncompletion: ")).text, "A increases B.");
}

TEST(Template, ReferenceRows) {
  EXPECT_EQ(template_generate(Component::from_edges(
                {{"routine practices in hospital", "breastfeeding knowledge", Polarity::Negative}})),
            "routine practices in hospital decreases breastfeeding knowledge.");
  EXPECT_EQ(template_generate(Component::from_edges(
                {{"ACEs of parents", "Parental risk factors", Polarity::Positive}})),
            "ACEs of parents increases Parental risk factors.");
}

TEST(Template, OneSentencePerEdge) {
  const auto c = Component::from_edges({{"a", "b", Polarity::Positive},
                                        {"b", "c", Polarity::Negative},
                                        {"a", "c", Polarity::Positive}});
  const auto text = template_generate(c);
  EXPECT_EQ(text, "a increases b. b decreases c. a increases c.");
  EXPECT_EQ(std::count(text.begin(), text.end(), '.'), 3);
}

TEST(Template, UsesLastQueryInFewShotPrompt) {
  TemplateBackend backend;
  const std::vector<PairRecord> examples = {{"<S> <H> x <NEG> <T> y <E>", "x decreases y."}};
  const auto prompt = build_few_shot(examples, 1, 0, "<S> <H> p <POS> <T> q <E>").text;
  EXPECT_EQ(backend.complete(request(prompt)).text, "p increases q.");
  EXPECT_EQ(backend.complete(request("<S> <H> p <CAUSES> <T> q <E>")).text, "p affects q.");
}

TEST(Request, Validation) {
  EXPECT_THROW(request("").validate(), Error);
  auto r = request("x");
  r.max_tokens = 0;
  EXPECT_THROW(r.validate(), Error);
  EXPECT_THROW(request("x", 2.5).validate(), Error);
}

TEST(Postprocess, TrimsAndCutsAtStop) {
  EXPECT_EQ(postprocess("  A increases B.\n\n###\n\nprompt:", "###"), "A increases B.");
  EXPECT_EQ(postprocess(" A increases B.\nmore", "\n"), "A increases B.");
  EXPECT_EQ(postprocess("\n x \n", ""), "x");
}

TEST(ReplayCache, PersistsAndHits) {
  const auto dir = scratch("replay");
  const auto path = dir / "cache.jsonl";
  TemplateBackend tmpl;
  std::string first;
  {
    ReplayCache cache(path);
    Client client(tmpl, &cache);
    first = client.complete(request("<S> <H> A <POS> <T> B <E>")).text;
    EXPECT_EQ(cache.size(), 1u);
  }
  ReplayCache reopened(path);
  ReplayBackend replay(reopened);
  const auto r = replay.complete(request("<S> <H> A <POS> <T> B <E>"));
  EXPECT_EQ(r.text, first);
  EXPECT_TRUE(r.from_cache);
  try {
    replay.complete(request("<S> <H> A <POS> <T> B <E>", 0.8));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "E_REPLAY_MISS");
  }
}

TEST(ReplayCache, SkipsTornLines) {
  const auto dir = scratch("torn");
  write_text_file(dir / "c.jsonl", "{\"request_hash\":\"x\",\"text\":\"t\"}\n{\"request_ha");
  ReplayCache cache(dir / "c.jsonl");
  EXPECT_EQ(cache.size(), 1u);
  EXPECT_EQ(cache.skipped_lines(), 1u);
}

TEST(RequestHash, KeyedOnModelPromptTemperatureMaxTokens) {
  const auto base = request("p");
  auto other = base;
  EXPECT_EQ(request_hash(base), request_hash(other));
  other.temperature = 0.8;
  EXPECT_NE(request_hash(base), request_hash(other));
  other = base;
  other.model = "curie";
  EXPECT_NE(request_hash(base), request_hash(other));
  other = base;
  other.max_tokens = 10;
  EXPECT_NE(request_hash(base), request_hash(other));
}

TEST(RetryPolicy, ExponentialWithCap) {
  RetryPolicy p;
  EXPECT_EQ(p.delay(1).count(), 1000);
  EXPECT_EQ(p.delay(2).count(), 2000);
  EXPECT_EQ(p.delay(5).count(), 16000);
  EXPECT_EQ(p.delay(6).count(), 32000);
  EXPECT_EQ(p.delay(9).count(), 32000);
  EXPECT_TRUE(RetryPolicy::retryable_status(429));
  EXPECT_TRUE(RetryPolicy::retryable_status(503));
  EXPECT_FALSE(RetryPolicy::retryable_status(400));
}

// Local stand-in for a completion endpoint.
class StubServer {
 public:
  explicit StubServer(int failures, int fail_status = 429) {
    server_.Post("/v1/completions", [this, failures, fail_status](const httplib::Request& req,
                                                                   httplib::Response& res) {
      last_auth_ = req.get_header_value("Authorization");
      last_body_ = req.body;
      if (calls_++ < failures) {
        res.status = fail_status;
        res.set_content("{\"error\":\"slow down\"}", "application/json");
        return;
      }
      res.set_content(R"({"choices":[{"text":"  A increases B.\n###\nextra","finish_reason":"stop"}]})",
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  int calls() const { return calls_; }
  std::string last_auth_, last_body_;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::atomic<int> calls_{0};
  std::thread thread_;
};

RemoteConfig stub_config(const StubServer& s, std::vector<long long>* sleeps) {
  RemoteConfig cfg;
  cfg.base_url = s.url();
  cfg.api_key = "test-key";
  cfg.timeout = std::chrono::seconds(5);
  cfg.retry.sleep = [sleeps](std::chrono::milliseconds d) { sleeps->push_back(d.count()); };
  return cfg;
}

TEST(Remote, SucceedsAfterThree429s) {
  StubServer stub(3);
  std::vector<long long> sleeps;
  RemoteBackend backend(stub_config(stub, &sleeps));
  auto req = request("<S> <H> A <POS> <T> B <E>");
  req.stop = "###";
  const auto r = backend.complete(req);
  EXPECT_EQ(r.text, "A increases B.");
  EXPECT_EQ(r.attempts, 4u);
  EXPECT_EQ(stub.calls(), 4);
  EXPECT_EQ(sleeps, (std::vector<long long>{1000, 2000, 4000}));
  EXPECT_GE(r.latency_ms, 0.0);
  EXPECT_EQ(stub.last_auth_, "Bearer test-key");
  const auto body = nlohmann::json::parse(stub.last_body_);
  EXPECT_EQ(body["model"], "davinci");
  EXPECT_EQ(body["max_tokens"], 256);
  EXPECT_EQ(body["stop"], "###");
}

TEST(Remote, GivesUpAfterFiveAttempts) {
  StubServer stub(100, 503);
  std::vector<long long> sleeps;
  RemoteBackend backend(stub_config(stub, &sleeps));
  try {
    backend.complete(request("p"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "E_RETRY_EXHAUSTED");
  }
  EXPECT_EQ(stub.calls(), 5);
}

TEST(Remote, ClientErrorIsNotRetried) {
  StubServer stub(100, 401);
  std::vector<long long> sleeps;
  RemoteBackend backend(stub_config(stub, &sleeps));
  EXPECT_THROW(backend.complete(request("p")), Error);
  EXPECT_EQ(stub.calls(), 1);
}

TEST(Remote, RecordsIntoReplayCache) {
  StubServer stub(0);
  std::vector<long long> sleeps;
  RemoteBackend backend(stub_config(stub, &sleeps));
  ReplayCache cache;
  Client client(backend, &cache);
  const auto a = client.complete(request("q"));
  const auto b = client.complete(request("q"));
  EXPECT_EQ(stub.calls(), 1);
  EXPECT_EQ(a.text, b.text);
  EXPECT_TRUE(b.from_cache);
}

TEST(Remote, AuthFromEnvironment) {
  ::unsetenv(std::string(kApiKeyEnv).c_str());
  EXPECT_THROW(RemoteConfig::from_env("http://localhost:1"), Error);
  ::setenv(std::string(kApiKeyEnv).c_str(), "k", 1);
  EXPECT_EQ(RemoteConfig::from_env("http://localhost:1").api_key, "k");
  ::unsetenv(std::string(kApiKeyEnv).c_str());
}

// Counts concurrent calls to check the in-flight bound.
class SlowBackend final : public Backend {
 public:
  CompletionResponse complete(const CompletionRequest& r) override {
    const int now = ++active_;
    int seen = peak_.load();
    while (now > seen && !peak_.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    --active_;
    if (r.prompt == "fail") throw Error("E_BOOM", "scripted failure");
    return {r.prompt, FinishReason::Stop, 0, "slow", 1, false};
  }
  std::string name() const override { return "slow"; }
  std::atomic<int> active_{0}, peak_{0};
};

TEST(Client, BoundedConcurrencyAndOrderedResults) {
  SlowBackend backend;
  Client client(backend, nullptr, 3);
  std::vector<CompletionRequest> reqs;
  for (int i = 0; i < 24; ++i) reqs.push_back(request(i == 7 ? "fail" : "p" + std::to_string(i)));
  const auto out = client.complete_all(reqs);
  ASSERT_EQ(out.size(), 24u);
  for (int i = 0; i < 24; ++i) {
    if (i == 7) {
      EXPECT_FALSE(out[i].response);
      EXPECT_EQ(out[i].error_code, "E_BOOM");
    } else {
      EXPECT_EQ(out[i].response->text, "p" + std::to_string(i));
    }
  }
  EXPECT_LE(backend.peak_.load(), 3);
  EXPECT_GE(backend.peak_.load(), 2);
}

}  // namespace
}  // namespace causaltext::llm
