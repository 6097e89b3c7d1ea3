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

#ifndef CAUSALTEXT_LINEARIZE_HPP
#define CAUSALTEXT_LINEARIZE_HPP

#include <cctype>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "causaltext/error.hpp"
#include "causaltext/graph.hpp"
#include "causaltext/util.hpp"

// Tagged text form of a component (grammar in docs/linearized.ebnf):
//
//   <S> <H> head <POS> <T> tail | <H> head <NEG> <T> tail <E>
//
// Tokens are separated by exactly one space; labels are copied verbatim.

namespace causaltext {

inline constexpr std::string_view kDefaultConnector = "<CAUSES>";
inline constexpr std::string_view kDefaultDelimiter = "|";

namespace detail {

inline bool is_single_token(std::string_view token) {
  if (token.empty()) return false;
  for (unsigned char c : token)
    if (std::isspace(c) || c < 0x20) return false;
  return true;
}

inline bool is_reserved(std::string_view token) {
  for (auto tag : kReservedTags)
    if (token == tag) return true;
  return false;
}

}  // namespace detail

class LinearizationMode {
 public:
  enum class Kind { Tags, NoTags };

  static LinearizationMode tags() { return LinearizationMode(Kind::Tags, {}); }

  static LinearizationMode no_tags(std::string_view connector = kDefaultConnector) {
    if (!detail::is_single_token(connector))
      throw Error("E_CONNECTOR", "connector must be one non-empty token without whitespace");
    for (auto tag : kReservedTags)
      if (connector.find(tag) != std::string_view::npos)
        throw Error("E_CONNECTOR", "connector may not contain reserved token " + std::string(tag));
    if (connector.find('|') != std::string_view::npos)
      throw Error("E_CONNECTOR", "connector may not contain the pipe delimiter");
    return LinearizationMode(Kind::NoTags, std::string(connector));
  }

  Kind kind() const { return kind_; }
  bool has_tags() const { return kind_ == Kind::Tags; }
  const std::string& connector() const { return connector_; }

  std::string name() const { return has_tags() ? "tags" : "notags"; }

  friend bool operator==(const LinearizationMode&, const LinearizationMode&) = default;

 private:
  LinearizationMode(Kind kind, std::string connector)
      : kind_(kind), connector_(std::move(connector)) {}
  Kind kind_;
  std::string connector_;
};

struct LinearizedText {
  std::string text;
  LinearizationMode mode = LinearizationMode::tags();
  std::size_t edge_count = 0;
};

/// `delimiter` separates edge segments; an empty delimiter means segments
/// are separated by a single space only.
inline LinearizedText linearize(const Component& component,
                                const LinearizationMode& mode = LinearizationMode::tags(),
                                std::string_view delimiter = kDefaultDelimiter) {
  if (component.edges().empty())
    throw Error("E_EMPTY_COMPONENT", "cannot linearize an empty component");
  if (!delimiter.empty()) {
    if (!detail::is_single_token(delimiter) || detail::is_reserved(delimiter))
      throw Error("E_DELIMITER", "delimiter must be one non-reserved token");
  }
  std::string out = "<S>";
  const auto& edges = component.edges();
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& e = edges[i];
    for (const auto* label : {&e.source, &e.target}) {
      if (auto problem = label_problem(*label); !problem.empty())
        throw Error("E_BAD_LABEL", "edge " + std::to_string(i) + ": " + problem);
      if (!delimiter.empty())
        for (const auto& tok : split_whitespace(*label))
          if (tok == delimiter)
            throw Error("E_BAD_LABEL", "edge " + std::to_string(i) +
                                           ": label contains the delimiter token");
    }
    if (i > 0 && !delimiter.empty()) {
      out += ' ';
      out += delimiter;
    }
    out += " <H> ";
    out += e.source;
    out += ' ';
    out += mode.has_tags() ? (e.polarity == Polarity::Positive ? "<POS>" : "<NEG>")
                           : mode.connector();
    out += " <T> ";
    out += e.target;
  }
  out += " <E>";
  return {std::move(out), mode, edges.size()};
}

struct ParsedEdge {
  std::string source;
  std::string target;
  std::optional<Polarity> polarity;  // absent in NoTags mode
  friend bool operator==(const ParsedEdge&, const ParsedEdge&) = default;
};

struct ParsedLinearization {
  std::vector<ParsedEdge> edges;
  LinearizationMode mode = LinearizationMode::tags();
  std::string delimiter;

  /// Only Tags-mode text carries enough information to rebuild a component.
  Component component() const {
    if (!mode.has_tags())
      throw Error("E_NO_POLARITY", "NoTags text does not carry edge polarity");
    std::vector<LabeledEdge> out;
    out.reserve(edges.size());
    for (const auto& e : edges) out.push_back({e.source, e.target, *e.polarity});
    return Component::from_edges(std::move(out));
  }
};

struct ParseOptions {
  /// When unset, `|` is detected automatically and anything else is read as
  /// "no delimiter".
  std::optional<std::string> delimiter;
};

inline ParsedLinearization parse_linearized(std::string_view text,
                                            const ParseOptions& options = {}) {
  auto fail = [](const std::string& message) -> Error {
    return Error("E_LINEARIZED", message);
  };
  if (!starts_with(text, "<S> ")) throw fail("missing <S> start tag");
  if (text.size() < 8 || text.substr(text.size() - 4) != " <E>")
    throw fail("missing <E> end tag");
  const std::string_view body = text.substr(4, text.size() - 8);
  if (!starts_with(body, "<H> ")) throw fail("edge 0: segment without <H> head");

  // Segment boundaries are the <H> tags; labels cannot contain them.
  std::vector<std::string_view> segments;
  for (std::size_t pos = 0; pos < body.size();) {
    auto next = body.find(" <H> ", pos);
    if (next == std::string_view::npos) next = body.size();
    segments.push_back(body.substr(pos, next - pos));
    pos = next == body.size() ? next : next + 1;
  }

  std::string delimiter;
  if (options.delimiter) {
    delimiter = *options.delimiter;
  } else if (segments.size() > 1) {
    bool all_piped = true;
    for (std::size_t i = 0; i + 1 < segments.size(); ++i)
      if (segments[i].size() < 2 || segments[i].substr(segments[i].size() - 2) != " |")
        all_piped = false;
    if (all_piped) delimiter = std::string(kDefaultDelimiter);
  }

  ParsedLinearization result;
  result.delimiter = delimiter;
  std::vector<std::string> polarity_tokens;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto where = "edge " + std::to_string(i) + ": ";
    std::string_view seg = segments[i];
    if (i + 1 < segments.size() && !delimiter.empty()) {
      const std::string suffix = " " + delimiter;
      if (seg.size() < suffix.size() || seg.substr(seg.size() - suffix.size()) != suffix)
        throw fail(where + "missing delimiter '" + delimiter + "' after segment");
      seg.remove_suffix(suffix.size());
    }
    seg.remove_prefix(4);  // "<H> "
    const auto tail_at = seg.find(" <T> ");
    if (tail_at == std::string_view::npos) {
      if (seg.ends_with(" <T>")) throw fail(where + "segment without <T> tail label");
      throw fail(where + "missing <T> tag");
    }
    if (seg.find(" <T> ", tail_at + 1) != std::string_view::npos)
      throw fail(where + "more than one <T> tag");
    const auto head = seg.substr(0, tail_at);
    const auto tail = seg.substr(tail_at + 5);
    const auto split = head.rfind(' ');
    if (split == std::string_view::npos || split == 0)
      throw fail(where + "segment without head label or polarity token");
    ParsedEdge edge{std::string(head.substr(0, split)), std::string(tail), std::nullopt};
    for (const auto* label : {&edge.source, &edge.target})
      if (auto problem = label_problem(*label); !problem.empty())
        throw fail(where + problem);
    polarity_tokens.emplace_back(head.substr(split + 1));
    result.edges.push_back(std::move(edge));
  }

  std::size_t tagged = 0;
  for (const auto& tok : polarity_tokens)
    if (tok == "<POS>" || tok == "<NEG>") ++tagged;
  if (tagged == polarity_tokens.size()) {
    result.mode = LinearizationMode::tags();
    for (std::size_t i = 0; i < polarity_tokens.size(); ++i)
      result.edges[i].polarity =
          polarity_tokens[i] == "<POS>" ? Polarity::Positive : Polarity::Negative;
    return result;
  }
  for (std::size_t i = 0; i < polarity_tokens.size(); ++i) {
    if (tagged > 0 && polarity_tokens[i] != "<POS>" && polarity_tokens[i] != "<NEG>")
      throw Error("E_POLARITY", "edge " + std::to_string(i) + ": unknown polarity token '" +
                                    polarity_tokens[i] + "' in Tags mode");
    if (polarity_tokens[i] != polarity_tokens.front())
      throw Error("E_POLARITY", "edge " + std::to_string(i) + ": connector '" +
                                    polarity_tokens[i] + "' differs from '" +
                                    polarity_tokens.front() + "'");
  }
  result.mode = LinearizationMode::no_tags(polarity_tokens.front());
  return result;
}

/// Replaces every `<POS>`/`<NEG>` token with `connector`; nothing else
/// changes.
inline LinearizedText strip_polarity(const LinearizedText& input,
                                     std::string_view connector = kDefaultConnector) {
  if (!input.mode.has_tags())
    throw Error("E_ALREADY_NOTAGS", "input is already in NoTags mode");
  if (input.edge_count == 0)
    throw Error("E_EMPTY_COMPONENT", "input has no edges");
  auto mode = LinearizationMode::no_tags(connector);
  const std::string replacement = " " + std::string(connector) + " ";
  auto text = replace_all(input.text, " <POS> ", replacement);
  text = replace_all(std::move(text), " <NEG> ", replacement);
  return {std::move(text), std::move(mode), input.edge_count};
}

/// Reads any tagged string leniently (missing or repeated spaces around
/// tags, as in hand-typeset examples) and rewrites it in canonical spacing.
inline std::string canonicalize_linearized(std::string_view text) {
  std::string spaced;
  for (std::size_t i = 0; i < text.size();) {
    bool matched = false;
    for (auto tag : kReservedTags) {
      if (text.substr(i, tag.size()) == tag) {
        spaced += ' ';
        spaced += tag;
        spaced += ' ';
        i += tag.size();
        matched = true;
        break;
      }
    }
    if (!matched) {
      spaced += text[i] == '|' ? std::string(" | ") : std::string(1, text[i]);
      ++i;
    }
  }
  std::string out;
  for (const auto& tok : split_whitespace(spaced)) {
    if (!out.empty()) out += ' ';
    out += tok;
  }
  return out;
}

}  // namespace causaltext

#endif  // CAUSALTEXT_LINEARIZE_HPP
