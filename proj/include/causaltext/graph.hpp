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

#ifndef CAUSALTEXT_GRAPH_HPP
#define CAUSALTEXT_GRAPH_HPP

#include <algorithm>
#include <array>
#include <cctype>
#include <compare>
#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "causaltext/csv.hpp"
#include "causaltext/error.hpp"
#include "causaltext/util.hpp"

namespace causaltext {

enum class Polarity { Positive, Negative };

inline std::string_view polarity_name(Polarity p) {
  return p == Polarity::Positive ? "POS" : "NEG";
}

/// Accepts `+`, `-`, `POS`, `NEG` (case-insensitive for the word forms).
inline Polarity parse_polarity(std::string_view token) {
  token = trim(token);
  if (token == "+") return Polarity::Positive;
  if (token == "-") return Polarity::Negative;
  std::string upper(token);
  for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (upper == "POS") return Polarity::Positive;
  if (upper == "NEG") return Polarity::Negative;
  throw Error("E_POLARITY", "unknown polarity '" + std::string(token) + "'");
}

/// Tokens that delimit the linearized form; labels may not contain them.
inline constexpr std::array<std::string_view, 6> kReservedTags = {
    "<S>", "<H>", "<POS>", "<NEG>", "<T>", "<E>"};

/// Empty string when the label is usable, otherwise the reason it is not.
inline std::string label_problem(std::string_view label) {
  if (label.empty()) return "empty label";
  if (trim(label).size() != label.size())
    return "label has leading or trailing whitespace";
  for (unsigned char c : label)
    if (c < 0x20 || c == 0x7F) return "label contains a control character";
  if (label.find('|') != std::string_view::npos)
    return "label contains the pipe delimiter";
  for (auto tag : kReservedTags)
    if (label.find(tag) != std::string_view::npos)
      return "label contains reserved token " + std::string(tag);
  return {};
}

struct Node {
  std::string id;
  std::string label;
  friend auto operator<=>(const Node&, const Node&) = default;
};

struct Edge {
  std::string source;
  std::string target;
  Polarity polarity = Polarity::Positive;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Unchecked graph as read from a file, with a position string per element
/// for diagnostics.
struct GraphDocument {
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  std::vector<std::string> node_positions;
  std::vector<std::string> edge_positions;
};

struct Violation {
  std::string code;
  std::string element;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  std::vector<Violation> warnings;

  bool ok() const { return violations.empty(); }
};

inline ValidationReport validate(const GraphDocument& doc) {
  ValidationReport report;
  auto where_node = [&](std::size_t i) {
    return i < doc.node_positions.size() ? doc.node_positions[i]
                                         : "nodes[" + std::to_string(i) + "]";
  };
  auto where_edge = [&](std::size_t i) {
    return i < doc.edge_positions.size() ? doc.edge_positions[i]
                                         : "edges[" + std::to_string(i) + "]";
  };

  std::map<std::string, std::size_t> ids;
  std::map<std::string, std::size_t> labels;
  for (std::size_t i = 0; i < doc.nodes.size(); ++i) {
    const auto& n = doc.nodes[i];
    if (n.id.empty())
      report.violations.push_back({"E_EMPTY_ID", where_node(i), "node id is empty"});
    if (auto problem = label_problem(n.label); !problem.empty())
      report.violations.push_back(
          {n.label.empty() ? "E_EMPTY_LABEL" : "E_BAD_LABEL", where_node(i), problem});
    if (!ids.emplace(n.id, i).second)
      report.violations.push_back(
          {"E_DUPLICATE_NODE", where_node(i), "duplicate node id '" + n.id + "'"});
    if (!n.label.empty() && !labels.emplace(n.label, i).second)
      report.violations.push_back({"E_DUPLICATE_LABEL", where_node(i),
                                   "duplicate node label '" + n.label + "'"});
  }

  std::set<Edge> seen;
  std::set<std::string> touched;
  for (std::size_t i = 0; i < doc.edges.size(); ++i) {
    const auto& e = doc.edges[i];
    bool dangling = false;
    for (const auto* end : {&e.source, &e.target}) {
      if (!ids.contains(*end)) {
        report.violations.push_back({"E_DANGLING_EDGE", where_edge(i),
                                     "edge endpoint '" + *end + "' is not a node"});
        dangling = true;
      }
    }
    if (e.source == e.target)
      report.violations.push_back(
          {"E_SELF_LOOP", where_edge(i), "self-loop on '" + e.source + "'"});
    if (!seen.insert(e).second)
      report.violations.push_back({"E_DUPLICATE_EDGE", where_edge(i),
                                   "duplicate edge " + e.source + " -> " + e.target +
                                       " (" + std::string(polarity_name(e.polarity)) + ")"});
    if (!dangling) {
      touched.insert(e.source);
      touched.insert(e.target);
    }
  }
  for (std::size_t i = 0; i < doc.nodes.size(); ++i)
    if (!touched.contains(doc.nodes[i].id))
      report.warnings.push_back({"W_ISOLATED_NODE", where_node(i),
                                 "node '" + doc.nodes[i].label +
                                     "' has no edges and is left out of decomposition"});
  return report;
}

/// Signed directed graph with unique labels, no self-loops and no duplicate
/// (source, target, polarity) triples. Cycles are allowed. Nodes and edges
/// are kept in canonical sorted order, so equal graphs compare equal
/// regardless of input order.
class CausalGraph {
 public:
  CausalGraph() = default;

  static CausalGraph from_document(GraphDocument doc) {
    auto report = validate(doc);
    if (!report.ok()) {
      const auto& v = report.violations.front();
      throw Error(v.code, v.element + ": " + v.message);
    }
    CausalGraph g;
    g.nodes_ = std::move(doc.nodes);
    g.edges_ = std::move(doc.edges);
    std::sort(g.nodes_.begin(), g.nodes_.end());
    std::sort(g.edges_.begin(), g.edges_.end());
    for (std::size_t i = 0; i < g.nodes_.size(); ++i)
      g.index_.emplace(g.nodes_[i].id, i);
    return g;
  }

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  bool empty() const { return nodes_.empty(); }

  const std::string& label_of(const std::string& id) const {
    return nodes_.at(index_.at(id)).label;
  }

  friend bool operator==(const CausalGraph& a, const CausalGraph& b) {
    return a.nodes_ == b.nodes_ && a.edges_ == b.edges_;
  }

 private:
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Edge expressed directly by node labels; the unit components are built
/// from.
struct LabeledEdge {
  std::string source;
  std::string target;
  Polarity polarity = Polarity::Positive;
  friend auto operator<=>(const LabeledEdge&, const LabeledEdge&) = default;
};

namespace detail {

/// Kahn's algorithm over label-keyed edges.
inline bool is_acyclic(std::span<const LabeledEdge> edges) {
  std::map<std::string_view, std::size_t> indegree;
  std::multimap<std::string_view, std::string_view> out;
  for (const auto& e : edges) {
    indegree[e.source];
    ++indegree[e.target];
    out.emplace(e.source, e.target);
  }
  std::vector<std::string_view> ready;
  for (const auto& [n, d] : indegree)
    if (d == 0) ready.push_back(n);
  std::size_t visited = 0;
  while (!ready.empty()) {
    auto n = ready.back();
    ready.pop_back();
    ++visited;
    auto [lo, hi] = out.equal_range(n);
    for (auto it = lo; it != hi; ++it)
      if (--indegree[it->second] == 0) ready.push_back(it->second);
  }
  return visited == indegree.size();
}

inline bool is_weakly_connected(std::span<const LabeledEdge> edges) {
  if (edges.empty()) return false;
  std::map<std::string_view, std::string_view> parent;
  auto find = [&](std::string_view x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : edges) {
    parent.try_emplace(e.source, e.source);
    parent.try_emplace(e.target, e.target);
  }
  for (const auto& e : edges) parent[find(e.source)] = find(e.target);
  auto root = find(edges.front().source);
  for (auto& [n, p] : parent)
    if (find(n) != root) return false;
  return true;
}

}  // namespace detail

/// Small acyclic, weakly connected subgraph; the unit that becomes one
/// linearized prompt. Edge order is significant.
class Component {
 public:
  static Component from_edges(std::vector<LabeledEdge> edges) {
    if (edges.empty()) throw Error("E_EMPTY_COMPONENT", "component has no edges");
    std::set<LabeledEdge> seen;
    for (std::size_t i = 0; i < edges.size(); ++i) {
      const auto& e = edges[i];
      for (const auto* label : {&e.source, &e.target})
        if (auto problem = label_problem(*label); !problem.empty())
          throw Error("E_BAD_LABEL", "edge " + std::to_string(i) + ": " + problem);
      if (e.source == e.target)
        throw Error("E_SELF_LOOP", "edge " + std::to_string(i) + ": self-loop on '" +
                                       e.source + "'");
      if (!seen.insert(e).second)
        throw Error("E_DUPLICATE_EDGE", "edge " + std::to_string(i) + " repeats an earlier edge");
    }
    if (!detail::is_acyclic(edges))
      throw Error("E_CYCLIC_COMPONENT", "component contains a cycle");
    if (!detail::is_weakly_connected(edges))
      throw Error("E_DISCONNECTED_COMPONENT", "component is not weakly connected");
    Component c;
    c.edges_ = std::move(edges);
    return c;
  }

  const std::vector<LabeledEdge>& edges() const { return edges_; }

  /// Node labels in order of first appearance.
  std::vector<std::string> nodes() const {
    std::vector<std::string> out;
    std::set<std::string_view> seen;
    for (const auto& e : edges_)
      for (const auto* label : {&e.source, &e.target})
        if (seen.insert(*label).second) out.push_back(*label);
    return out;
  }

  std::size_t node_count() const { return nodes().size(); }

  friend bool operator==(const Component&, const Component&) = default;

 private:
  Component() = default;
  std::vector<LabeledEdge> edges_;
};

/// Greedy edge grouping. Edges are sorted by (source label, target label,
/// polarity); each component is seeded with the first unassigned edge and
/// grows by the earliest unassigned edge that touches it, keeps it acyclic
/// and stays within `max_nodes`. Every edge lands in exactly one component.
inline std::vector<Component> decompose(const CausalGraph& graph,
                                        std::size_t max_nodes = 4) {
  if (max_nodes < 2)
    throw Error("E_MAX_NODES", "max_nodes must be at least 2, got " +
                                   std::to_string(max_nodes));
  if (graph.edges().empty())
    throw Error("E_EMPTY_GRAPH", "graph has no edges to decompose");

  std::vector<LabeledEdge> order;
  order.reserve(graph.edges().size());
  for (const auto& e : graph.edges())
    order.push_back({graph.label_of(e.source), graph.label_of(e.target), e.polarity});
  std::sort(order.begin(), order.end());

  std::vector<bool> assigned(order.size(), false);
  std::vector<Component> out;

  for (std::size_t seed = 0; seed < order.size(); ++seed) {
    if (assigned[seed]) continue;
    assigned[seed] = true;
    std::vector<LabeledEdge> group{order[seed]};
    std::set<std::string_view> members{order[seed].source, order[seed].target};
    std::multimap<std::string_view, std::string_view> succ{
        {order[seed].source, order[seed].target}};

    // u -> v closes a cycle iff v already reaches u.
    auto reaches = [&](std::string_view from, std::string_view to) {
      std::vector<std::string_view> stack{from};
      std::set<std::string_view> seen{from};
      while (!stack.empty()) {
        auto n = stack.back();
        stack.pop_back();
        if (n == to) return true;
        auto [lo, hi] = succ.equal_range(n);
        for (auto it = lo; it != hi; ++it)
          if (seen.insert(it->second).second) stack.push_back(it->second);
      }
      return false;
    };

    bool grew = true;
    while (grew) {
      grew = false;
      for (std::size_t i = seed + 1; i < order.size(); ++i) {
        if (assigned[i]) continue;
        const auto& e = order[i];
        const bool has_source = members.contains(e.source);
        const bool has_target = members.contains(e.target);
        if (!has_source && !has_target) continue;
        const std::size_t added = (has_source ? 0 : 1) + (has_target ? 0 : 1);
        if (members.size() + added > max_nodes) continue;
        if (has_source && has_target && reaches(e.target, e.source)) continue;
        assigned[i] = true;
        group.push_back(e);
        members.insert(e.source);
        members.insert(e.target);
        succ.emplace(e.source, e.target);
        grew = true;
        break;
      }
    }
    out.push_back(Component::from_edges(std::move(group)));
  }
  return out;
}

/// Union of component edges as a graph whose node ids are the labels.
/// Shared nodes collapse to one; repeated edges are counted once.
inline CausalGraph union_components(std::span<const Component> components) {
  GraphDocument doc;
  std::set<std::string> labels;
  std::set<Edge> edges;
  for (const auto& c : components)
    for (const auto& e : c.edges()) {
      labels.insert(e.source);
      labels.insert(e.target);
      edges.insert({e.source, e.target, e.polarity});
    }
  for (const auto& l : labels) doc.nodes.push_back({l, l});
  doc.edges.assign(edges.begin(), edges.end());
  return CausalGraph::from_document(std::move(doc));
}

// ---------------------------------------------------------------------------
// Serialization

enum class GraphFormat { Json, EdgeList };

/// Picks a format from a path extension, falling back to sniffing the text.
inline GraphFormat detect_format(std::string_view path, std::string_view text) {
  auto ends_with = [&](std::string_view suffix) {
    return path.size() >= suffix.size() &&
           path.substr(path.size() - suffix.size()) == suffix;
  };
  if (ends_with(".json")) return GraphFormat::Json;
  if (ends_with(".csv") || ends_with(".edges")) return GraphFormat::EdgeList;
  auto body = trim(text);
  return !body.empty() && body.front() == '{' ? GraphFormat::Json : GraphFormat::EdgeList;
}

inline GraphDocument read_edge_list(std::string_view text) {
  GraphDocument doc;
  std::map<std::string, std::size_t> first_seen;
  for (const auto& row : csv::parse(text)) {
    const auto where = "line " + std::to_string(row.line);
    if (row.fields.size() == 1 && trim(row.fields[0]).empty()) continue;
    if (!row.fields.empty() && starts_with(trim(row.fields[0]), "#")) continue;
    if (row.fields.size() != 3)
      throw Error("E_PARSE", where + ": expected 3 fields `source,polarity,target`, got " +
                                 std::to_string(row.fields.size()));
    Polarity polarity;
    try {
      polarity = parse_polarity(row.fields[1]);
    } catch (const Error& e) {
      throw Error("E_PARSE", where + ": " + e.what());
    }
    std::string source(trim(row.fields[0]));
    std::string target(trim(row.fields[2]));
    for (const auto* label : {&source, &target})
      if (first_seen.emplace(*label, doc.nodes.size()).second) {
        doc.nodes.push_back({*label, *label});
        doc.node_positions.push_back(where);
      }
    doc.edges.push_back({std::move(source), std::move(target), polarity});
    doc.edge_positions.push_back(where);
  }
  return doc;
}

inline GraphDocument read_json_document(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("E_PARSE", "byte " + std::to_string(e.byte) + ": malformed JSON");
  }
  if (!j.is_object()) throw Error("E_PARSE", "document root must be an object");
  GraphDocument doc;
  auto field = [](const nlohmann::json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key) || !obj[key].is_string())
      throw Error("E_PARSE", where + ": missing string field '" + key + "'");
    return obj[key].get<std::string>();
  };
  const auto nodes = j.value("nodes", nlohmann::json::array());
  const auto edges = j.value("edges", nlohmann::json::array());
  if (!nodes.is_array() || !edges.is_array())
    throw Error("E_PARSE", "'nodes' and 'edges' must be arrays");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto where = "nodes[" + std::to_string(i) + "]";
    doc.nodes.push_back({field(nodes[i], "id", where),
                         std::string(trim(field(nodes[i], "label", where)))});
    doc.node_positions.push_back(where);
  }
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto where = "edges[" + std::to_string(i) + "]";
    Polarity polarity;
    try {
      polarity = parse_polarity(field(edges[i], "polarity", where));
    } catch (const Error& e) {
      if (e.code() == "E_PARSE") throw;
      throw Error("E_PARSE", where + ": " + e.what());
    }
    doc.edges.push_back({field(edges[i], "source", where), field(edges[i], "target", where),
                         polarity});
    doc.edge_positions.push_back(where);
  }
  return doc;
}

inline GraphDocument read_graph_document(std::string_view text, GraphFormat format) {
  return format == GraphFormat::Json ? read_json_document(text) : read_edge_list(text);
}

inline CausalGraph parse_graph(std::string_view text, GraphFormat format) {
  return CausalGraph::from_document(read_graph_document(text, format));
}

inline nlohmann::json to_json(const CausalGraph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& n : g.nodes()) nodes.push_back({{"id", n.id}, {"label", n.label}});
  for (const auto& e : g.edges())
    edges.push_back({{"source", e.source},
                     {"target", e.target},
                     {"polarity", polarity_name(e.polarity)}});
  return {{"nodes", nodes}, {"edges", edges}};
}

/// Component in the graph document format; node ids are the labels.
inline nlohmann::json to_json(const Component& c) {
  nlohmann::json nodes = nlohmann::json::array();
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& label : c.nodes()) nodes.push_back({{"id", label}, {"label", label}});
  for (const auto& e : c.edges())
    edges.push_back({{"source", e.source},
                     {"target", e.target},
                     {"polarity", polarity_name(e.polarity)}});
  return {{"nodes", nodes}, {"edges", edges}};
}

inline Component component_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("edges") || !j["edges"].is_array())
    throw Error("E_PARSE", "component document needs an 'edges' array");
  std::map<std::string, std::string> labels;
  if (j.contains("nodes") && j["nodes"].is_array())
    for (const auto& n : j["nodes"])
      labels[n.at("id").get<std::string>()] = n.at("label").get<std::string>();
  auto label = [&](const std::string& id) {
    auto it = labels.find(id);
    return it == labels.end() ? id : it->second;
  };
  std::vector<LabeledEdge> edges;
  for (const auto& e : j["edges"])
    edges.push_back({label(e.at("source").get<std::string>()),
                     label(e.at("target").get<std::string>()),
                     parse_polarity(e.at("polarity").get<std::string>())});
  return Component::from_edges(std::move(edges));
}

}  // namespace causaltext

#endif  // CAUSALTEXT_GRAPH_HPP
