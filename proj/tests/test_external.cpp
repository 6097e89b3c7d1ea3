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

#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "causaltext/external.hpp"

namespace causaltext::metrics {
namespace {

std::vector<ScoredPair> three_pairs() {
  return {{"a increases b.", "a increases b.", std::nullopt},
          {"c", "d", std::nullopt},
          {"e \"quoted\"", "f\nnewline", std::nullopt}};
}

TEST(External, ConstantAdapterScoresEveryPair) {
  const auto out = external_score(
      three_pairs(), AdapterSpec::parse("cmd:while IFS= read -r l; do echo '{\"name\":\"const\",\"score\":0.9}'; done"));
  EXPECT_TRUE(out.warnings.empty());
  ASSERT_EQ(out.scores.count("const"), 1u);
  EXPECT_EQ(out.scores.at("const"), (std::vector<double>{0.9, 0.9, 0.9}));
}

TEST(External, RecordsAreLineDelimitedJson) {
  // Adapter scores each pair by whether candidate equals reference.
  const auto out = external_score(
      three_pairs(),
      AdapterSpec::parse("python3 -c \"import sys,json\n"
                         "for l in sys.stdin:\n"
                         "  r=json.loads(l); print(json.dumps({'name':'eq','score':float(r['candidate']==r['reference'])}))\""));
  ASSERT_TRUE(out.warnings.empty()) << out.warnings.front();
  EXPECT_EQ(out.scores.at("eq"), (std::vector<double>{1.0, 0.0, 0.0}));
}

TEST(External, UnreachableAdapterDegrades) {
  auto out = external_score(three_pairs(), AdapterSpec::parse("cmd:exit 3"));
  EXPECT_TRUE(out.scores.empty());
  EXPECT_EQ(out.warnings.size(), 1u);
  out = external_score(three_pairs(), AdapterSpec::parse("http://127.0.0.1:1/score"));
  EXPECT_TRUE(out.scores.empty());
  EXPECT_EQ(out.warnings.size(), 1u);
}

TEST(External, CountMismatchDropsMetric) {
  const auto out = external_score(
      three_pairs(), AdapterSpec::parse("echo '{\"name\":\"short\",\"score\":0.5}'"));
  EXPECT_TRUE(out.scores.empty());
  ASSERT_EQ(out.warnings.size(), 1u);
  EXPECT_NE(out.warnings[0].find("short"), std::string::npos);
}

TEST(External, MalformedOutputDegrades) {
  const auto out = external_score(three_pairs(), AdapterSpec::parse("echo not-json"));
  EXPECT_TRUE(out.scores.empty());
  EXPECT_EQ(out.warnings.size(), 1u);
}

TEST(External, HttpEndpoint) {
  httplib::Server server;
  server.Post("/score", [](const httplib::Request& req, httplib::Response& res) {
    std::string body;
    for (const auto& line : split_lines(req.body))
      if (!line.empty())
        body += R"({"name":"bertscore","score":0.5})" "\n" R"({"name":"questeval","score":0.25})" "\n";
    res.set_content(body, "application/x-ndjson");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  const auto out = external_score(three_pairs(),
                                  AdapterSpec::parse("http://127.0.0.1:" + std::to_string(port) + "/score"));
  server.stop();
  t.join();
  EXPECT_TRUE(out.warnings.empty());
  EXPECT_EQ(out.scores.at("bertscore"), (std::vector<double>{0.5, 0.5, 0.5}));
  EXPECT_EQ(out.scores.at("questeval"), (std::vector<double>{0.25, 0.25, 0.25}));
}

}  // namespace
}  // namespace causaltext::metrics
