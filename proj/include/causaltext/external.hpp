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

#ifndef CAUSALTEXT_EXTERNAL_HPP
#define CAUSALTEXT_EXTERNAL_HPP

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "causaltext/metrics.hpp"
#include "causaltext/util.hpp"

// Neural scorers (BERTScore, QuestEval, ...) run out of process. The adapter
// receives one `{"candidate": ..., "reference": ...}` line per pair and
// answers with `{"name": ..., "score": ...}` lines, one per (pair, metric),
// in pair order.

namespace causaltext::metrics {

struct AdapterSpec {
  enum class Kind { Command, Http };
  Kind kind = Kind::Command;
  std::string target;

  /// `http://` or `https://` URLs are endpoints; `cmd:<shell>` or any other
  /// string is a shell command reading stdin and writing stdout.
  static AdapterSpec parse(std::string_view spec) {
    if (starts_with(spec, "http://") || starts_with(spec, "https://"))
      return {Kind::Http, std::string(spec)};
    if (starts_with(spec, "cmd:")) spec.remove_prefix(4);
    return {Kind::Command, std::string(spec)};
  }
};

struct ExternalScores {
  std::map<std::string, std::vector<double>> scores;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::string run_command(const std::string& command, const std::string& input, bool& ok) {
  ok = false;
  auto tmpl = (std::filesystem::temp_directory_path() / "causaltext-adapter-XXXXXX").string();
  const int fd = ::mkstemp(tmpl.data());
  if (fd < 0) return "cannot create temporary file";
  {
    std::size_t off = 0;
    while (off < input.size()) {
      const auto n = ::write(fd, input.data() + off, input.size() - off);
      if (n <= 0) break;
      off += static_cast<std::size_t>(n);
    }
    ::close(fd);
  }
  const std::string full = "(" + command + ") < '" + tmpl + "'";
  std::string output;
  if (FILE* pipe = ::popen(full.c_str(), "r")) {
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, n);
    const int status = ::pclose(pipe);
    ok = status == 0;
    if (!ok) output = "adapter command exited with status " + std::to_string(status);
  } else {
    output = "cannot start adapter command";
  }
  std::filesystem::remove(tmpl);
  return output;
}

inline std::string post_endpoint(const std::string& url, const std::string& input, bool& ok) {
  ok = false;
  const auto scheme_end = url.find("://");
  const auto path_start = url.find('/', scheme_end + 3);
  httplib::Client client(url.substr(0, path_start));
  client.set_connection_timeout(std::chrono::seconds(10));
  client.set_read_timeout(std::chrono::seconds(600));
  const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);
  auto res = client.Post(path, input, "application/x-ndjson");
  if (!res) return "adapter unreachable: " + httplib::to_string(res.error());
  if (res->status != 200) return "adapter returned HTTP " + std::to_string(res->status);
  ok = true;
  return res->body;
}

}  // namespace detail

/// Never throws for adapter trouble: problems become warnings and the
/// affected metrics are simply absent.
inline ExternalScores external_score(std::span<const ScoredPair> pairs, const AdapterSpec& adapter) {
  ExternalScores out;
  if (pairs.empty()) return out;
  std::string input;
  for (const auto& p : pairs)
    input += nlohmann::json{{"candidate", p.candidate}, {"reference", p.reference}}.dump() + "\n";

  bool ok = false;
  const auto output = adapter.kind == AdapterSpec::Kind::Http
                          ? detail::post_endpoint(adapter.target, input, ok)
                          : detail::run_command(adapter.target, input, ok);
  if (!ok) {
    out.warnings.push_back("external scorer: " + output);
    return out;
  }

  std::map<std::string, std::vector<double>> collected;
  std::size_t line_no = 0;
  for (const auto& line : split_lines(output)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const double v = j.at("score").get<double>();
      if (!std::isfinite(v)) throw std::runtime_error("non-finite score");
      collected[j.at("name").get<std::string>()].push_back(v);
    } catch (const std::exception& e) {
      out.warnings.push_back("external scorer: malformed output line " + std::to_string(line_no));
      return out;
    }
  }
  for (auto& [name, values] : collected) {
    if (values.size() != pairs.size()) {
      out.warnings.push_back("external scorer: metric '" + name + "' returned " +
                             std::to_string(values.size()) + " scores for " +
                             std::to_string(pairs.size()) + " pairs; dropped");
      continue;
    }
    out.scores[name] = std::move(values);
  }
  return out;
}

}  // namespace causaltext::metrics

#endif  // CAUSALTEXT_EXTERNAL_HPP
