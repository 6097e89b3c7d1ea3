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

// Generators and independent checkers shared by the unit tests and the
// acceptance runner. The checkers deliberately avoid the library's own
// helpers so they can serve as oracles.

#ifndef CAUSALTEXT_TESTS_SUPPORT_HPP
#define CAUSALTEXT_TESTS_SUPPORT_HPP

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "causaltext/graph.hpp"
#include "causaltext/llm.hpp"
#include "causaltext/prompt.hpp"

namespace causaltext::testing {

inline const char* const kNutritionEdgeList =
    "nutrition,+,consumption of fruits and vegetables\n"
    "nutrition,+,nutrition education hours\n"
    "consumption of fruits and vegetables,-,obesity\n"
    "consumption of fruits and vegetables,+,social support for eating fruits and vegetables\n"
    "consumption of fruits and vegetables,-,lack of knowledge of benefits to eating fruits and vegetables\n";

inline const char* const kNutritionTags =
    "<S> <H> nutrition <POS> <T> consumption of fruits and vegetables | <H> nutrition <POS> <T> "
    "nutrition education hours | <H> consumption of fruits and vegetables <NEG> <T> obesity | <H> "
    "consumption of fruits and vegetables <POS> <T> social support for eating fruits and "
    "vegetables | <H> consumption of fruits and vegetables <NEG> <T> lack of knowledge of benefits "
    "to eating fruits and vegetables <E>";

inline Component nutrition_component() {
  return Component::from_edges({
      {"nutrition", "consumption of fruits and vegetables", Polarity::Positive},
      {"nutrition", "nutrition education hours", Polarity::Positive},
      {"consumption of fruits and vegetables", "obesity", Polarity::Negative},
      {"consumption of fruits and vegetables", "social support for eating fruits and vegetables",
       Polarity::Positive},
      {"consumption of fruits and vegetables",
       "lack of knowledge of benefits to eating fruits and vegetables", Polarity::Negative},
  });
}

// Vocabulary mixes plain words, punctuation, digits and multi-byte UTF-8.
inline const std::vector<std::string>& word_pool() {
  static const std::vector<std::string> pool = {
      "stress", "sleep", "obesity", "income", "ACEs", "of", "parents", "risk", "x-ray",
      "(BMI)", "café", "naïve", "2nd", "a,b", "\"quoted\"", "self-esteem", "food", "access",
      "walkability", "screen", "time", "peer", "support", "<tag>", "co-op", "50%", "über",
      "mood", "anxiety", "debt", "exercise", "diet", "sugar", "tax", "school", "lunch"};
  return pool;
}

inline std::string random_label(std::mt19937_64& rng) {
  const auto& pool = word_pool();
  std::uniform_int_distribution<int> len(1, 4);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::string out;
  for (int i = 0, n = len(rng); i < n; ++i) {
    if (i) out += ' ';
    out += pool[pick(rng)];
  }
  return out;
}

inline std::vector<std::string> distinct_labels(std::mt19937_64& rng, std::size_t n) {
  std::set<std::string> seen;
  std::vector<std::string> out;
  while (out.size() < n) {
    auto l = random_label(rng);
    if (seen.insert(l).second) out.push_back(l);
  }
  return out;
}

/// Random signed digraph; cycles and opposite-polarity parallel edges allowed.
inline CausalGraph random_graph(std::mt19937_64& rng, std::size_t max_nodes = 50,
                                std::size_t max_edges = 150) {
  std::uniform_int_distribution<std::size_t> nn(2, max_nodes);
  const auto n = nn(rng);
  const auto labels = distinct_labels(rng, n);
  GraphDocument doc;
  for (std::size_t i = 0; i < n; ++i) doc.nodes.push_back({"n" + std::to_string(i), labels[i]});
  std::uniform_int_distribution<std::size_t> ne(1, std::min(max_edges, n * (n - 1) * 2));
  std::uniform_int_distribution<std::size_t> node(0, n - 1);
  std::set<Edge> edges;
  for (std::size_t target = ne(rng), tries = 0; edges.size() < target && tries < target * 20; ++tries) {
    const auto s = node(rng), t = node(rng);
    if (s == t) continue;
    edges.insert({"n" + std::to_string(s), "n" + std::to_string(t),
                  rng() % 2 ? Polarity::Positive : Polarity::Negative});
  }
  doc.edges.assign(edges.begin(), edges.end());
  std::shuffle(doc.edges.begin(), doc.edges.end(), rng);
  return CausalGraph::from_document(std::move(doc));
}

/// 98 concepts and 177 signed edges, matching the size of the public
/// obesity map. Contains cycles.
inline CausalGraph obesity_scale_graph(std::uint64_t seed = 98177) {
  std::mt19937_64 rng(seed);
  GraphDocument doc;
  for (int i = 0; i < 98; ++i)
    doc.nodes.push_back({"c" + std::to_string(i), "concept " + std::to_string(i)});
  std::uniform_int_distribution<int> node(0, 97);
  std::set<Edge> edges;
  // A spanning backbone keeps every concept connected.
  for (int i = 1; i < 98; ++i)
    edges.insert({"c" + std::to_string(node(rng) % i), "c" + std::to_string(i), Polarity::Positive});
  while (edges.size() < 177) {
    const int s = node(rng), t = node(rng);
    if (s != t)
      edges.insert({"c" + std::to_string(s), "c" + std::to_string(t),
                    rng() % 2 ? Polarity::Positive : Polarity::Negative});
  }
  doc.edges.assign(edges.begin(), edges.end());
  return CausalGraph::from_document(std::move(doc));
}

/// Random acyclic, weakly connected component with up to `max_nodes` nodes.
inline Component random_component(std::mt19937_64& rng, std::size_t max_nodes = 6) {
  std::uniform_int_distribution<std::size_t> nn(2, max_nodes);
  const auto n = nn(rng);
  const auto labels = distinct_labels(rng, n);
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) rank[i] = i;
  std::shuffle(rank.begin(), rank.end(), rng);
  auto oriented = [&](std::size_t a, std::size_t b) {
    if (rank[a] > rank[b]) std::swap(a, b);
    return LabeledEdge{labels[a], labels[b], rng() % 2 ? Polarity::Positive : Polarity::Negative};
  };
  std::set<LabeledEdge> seen;
  std::vector<LabeledEdge> edges;
  for (std::size_t i = 1; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> earlier(0, i - 1);
    auto e = oriented(i, earlier(rng));
    if (seen.insert(e).second) edges.push_back(e);
  }
  std::uniform_int_distribution<std::size_t> extra(0, n), node(0, n - 1);
  for (std::size_t k = extra(rng); k > 0; --k) {
    const auto a = node(rng), b = node(rng);
    if (a == b) continue;
    auto e = oriented(a, b);
    if (seen.insert(e).second) edges.push_back(e);
  }
  std::shuffle(edges.begin(), edges.end(), rng);
  return Component::from_edges(std::move(edges));
}

// ---------------------------------------------------------------------------
// Independent decomposition checker

inline bool toposort_ok(const std::vector<LabeledEdge>& edges) {
  std::set<std::string> nodes;
  for (const auto& e : edges) nodes.insert({e.source, e.target});
  // Repeatedly delete a node without incoming edges.
  std::vector<LabeledEdge> left = edges;
  while (!nodes.empty()) {
    std::optional<std::string> free;
    for (const auto& n : nodes)
      if (std::none_of(left.begin(), left.end(), [&](const auto& e) { return e.target == n; })) {
        free = n;
        break;
      }
    if (!free) return false;
    nodes.erase(*free);
    std::erase_if(left, [&](const auto& e) { return e.source == *free; });
  }
  return true;
}

inline bool weakly_connected(const std::vector<LabeledEdge>& edges) {
  std::map<std::string, std::set<std::string>> adj;
  for (const auto& e : edges) {
    adj[e.source].insert(e.target);
    adj[e.target].insert(e.source);
  }
  std::set<std::string> seen{adj.begin()->first};
  std::vector<std::string> stack{adj.begin()->first};
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    for (const auto& m : adj[n])
      if (seen.insert(m).second) stack.push_back(m);
  }
  return seen.size() == adj.size();
}

/// Empty string when every decomposition contract holds.
inline std::string check_decomposition(const CausalGraph& g, const std::vector<Component>& comps,
                                       std::size_t max_nodes) {
  std::multiset<std::tuple<std::string, std::string, Polarity>> got, want;
  for (const auto& e : g.edges()) want.insert({g.label_of(e.source), g.label_of(e.target), e.polarity});
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const auto& edges = comps[i].edges();
    if (edges.empty()) return "component " + std::to_string(i) + " is empty";
    std::set<std::string> nodes;
    for (const auto& e : edges) {
      got.insert({e.source, e.target, e.polarity});
      nodes.insert({e.source, e.target});
    }
    if (nodes.size() < 2 || nodes.size() > max_nodes)
      return "component " + std::to_string(i) + " has " + std::to_string(nodes.size()) + " nodes";
    if (!toposort_ok(edges)) return "component " + std::to_string(i) + " is cyclic";
    if (!weakly_connected(edges)) return "component " + std::to_string(i) + " is disconnected";
  }
  if (got != want) return "edge multiset of the components differs from the graph";
  return {};
}

// ---------------------------------------------------------------------------
// Synthetic pairs

/// `n` pairs whose references are template sentences of their components.
inline std::vector<PairRecord> synthetic_pairs(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<PairRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = random_component(rng, 4);
    out.push_back({linearize(c).text, llm::template_generate(c)});
  }
  return out;
}

}  // namespace causaltext::testing

#endif  // CAUSALTEXT_TESTS_SUPPORT_HPP
