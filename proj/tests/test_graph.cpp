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

#include <algorithm>
#include <chrono>
#include <random>

#include <gtest/gtest.h>

#include "causaltext/graph.hpp"
#include "support.hpp"

namespace causaltext {
namespace {

CausalGraph edges(std::string_view text) { return parse_graph(text, GraphFormat::EdgeList); }

std::string error_code(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "no error";
}

TEST(ParseGraph, NutritionEdgeListGivesSixNodesFiveEdges) {
  const auto g = edges(testing::kNutritionEdgeList);
  EXPECT_EQ(g.nodes().size(), 6u);
  EXPECT_EQ(g.edges().size(), 5u);
}

TEST(ParseGraph, EmptyDocumentIsValid) {
  const auto g = parse_graph(R"({"nodes": [], "edges": []})", GraphFormat::Json);
  EXPECT_TRUE(g.empty());
  EXPECT_TRUE(g.edges().empty());
  EXPECT_TRUE(edges("").empty());
}

TEST(ParseGraph, SelfLoopRejected) {
  EXPECT_EQ(error_code([] { edges("A,+,A\n"); }), "E_SELF_LOOP");
}

TEST(ParseGraph, RowOrderDoesNotMatter) {
  std::vector<std::string> rows = causaltext::split_lines(testing::kNutritionEdgeList);
  const auto reference = edges(testing::kNutritionEdgeList);
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(rows.begin(), rows.end(), rng);
    std::string text;
    for (const auto& r : rows) text += r + "\n";
    EXPECT_EQ(edges(text), reference);
  }
}

TEST(ParseGraph, PolarityForms) {
  const auto g = edges("a,+,b\nb,POS,c\nc,-,d\nd,neg,e\n");
  ASSERT_EQ(g.edges().size(), 4u);
  EXPECT_EQ(g.edges()[0].polarity, Polarity::Positive);
  EXPECT_EQ(g.edges()[1].polarity, Polarity::Positive);
  EXPECT_EQ(g.edges()[2].polarity, Polarity::Negative);
  EXPECT_EQ(g.edges()[3].polarity, Polarity::Negative);
}

TEST(ParseGraph, QuotedFieldsAndComments) {
  const auto g = edges("# comment\n\"income, household\",+,\"debt\"\n\n");
  ASSERT_EQ(g.nodes().size(), 2u);
  EXPECT_EQ(g.label_of("income, household"), "income, household");
}

TEST(ParseGraph, MalformedRowReportsLine) {
  try {
    edges("a,+,b\nc,+\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "E_PARSE");
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  try {
    edges("a,+,b\nc,maybe,d\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(ParseGraph, JsonErrorsCarryPosition) {
  try {
    parse_graph(R"({"nodes":[{"id":"a","label":"A"},{"id":"b"}],"edges":[]})", GraphFormat::Json);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "E_PARSE");
    EXPECT_NE(std::string(e.what()).find("nodes[1]"), std::string::npos);
  }
}

TEST(ParseGraph, DocumentInvariants) {
  auto doc = [](std::string nodes, std::string edges) {
    return R"({"nodes":[)" + nodes + R"(],"edges":[)" + edges + "]}";
  };
  const std::string ab = R"({"id":"a","label":"A"},{"id":"b","label":"B"})";
  EXPECT_EQ(error_code([&] {
              parse_graph(doc(ab + R"(,{"id":"c","label":"A"})", ""), GraphFormat::Json);
            }),
            "E_DUPLICATE_LABEL");
  EXPECT_EQ(error_code([&] {
              parse_graph(doc(ab, R"({"source":"a","target":"z","polarity":"POS"})"), GraphFormat::Json);
            }),
            "E_DANGLING_EDGE");
  EXPECT_EQ(error_code([&] {
              parse_graph(doc(ab, R"({"source":"a","target":"b","polarity":"POS"},)"
                                  R"({"source":"a","target":"b","polarity":"POS"})"),
                          GraphFormat::Json);
            }),
            "E_DUPLICATE_EDGE");
  EXPECT_EQ(error_code([&] {
              parse_graph(doc(R"({"id":"a","label":"x <POS> y"})", ""), GraphFormat::Json);
            }),
            "E_BAD_LABEL");
  EXPECT_EQ(error_code([&] {
              parse_graph(doc(R"({"id":"a","label":"x | y"})", ""), GraphFormat::Json);
            }),
            "E_BAD_LABEL");
  // opposite polarity on the same pair is allowed
  EXPECT_NO_THROW(parse_graph(doc(ab, R"({"source":"a","target":"b","polarity":"POS"},)"
                                      R"({"source":"a","target":"b","polarity":"NEG"})"),
                              GraphFormat::Json));
}

TEST(Validate, IsolatedNodeWarnsOnly) {
  GraphDocument doc;
  doc.nodes = {{"a", "A"}, {"b", "B"}, {"c", "C"}};
  doc.edges = {{"a", "b", Polarity::Positive}};
  const auto r = validate(doc);
  EXPECT_TRUE(r.ok());
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_EQ(r.warnings[0].code, "W_ISOLATED_NODE");
}

TEST(Validate, EmptyReportIffGraphConstructs) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    GraphDocument doc;
    const int n = 1 + static_cast<int>(rng() % 5);
    for (int k = 0; k < n; ++k)
      doc.nodes.push_back({"n" + std::to_string(rng() % 5), rng() % 7 ? "L" + std::to_string(rng() % 6) : ""});
    for (int k = 0; k < 4; ++k)
      doc.edges.push_back({"n" + std::to_string(rng() % 6), "n" + std::to_string(rng() % 6),
                           rng() % 2 ? Polarity::Positive : Polarity::Negative});
    bool constructed = true;
    try {
      CausalGraph::from_document(doc);
    } catch (const Error&) {
      constructed = false;
    }
    EXPECT_EQ(validate(doc).ok(), constructed);
  }
}

TEST(Decompose, TriangleSplitsAsWorkedExample) {
  const auto comps = decompose(edges("A,+,B\nB,+,C\nC,+,A\n"), 4);
  ASSERT_EQ(comps.size(), 2u);
  EXPECT_EQ(comps[0].edges(), (std::vector<LabeledEdge>{{"A", "B", Polarity::Positive},
                                                         {"B", "C", Polarity::Positive}}));
  EXPECT_EQ(comps[1].edges(), (std::vector<LabeledEdge>{{"C", "A", Polarity::Positive}}));
}

TEST(Decompose, SingleEdge) {
  const auto comps = decompose(edges("A,-,B\n"), 4);
  ASSERT_EQ(comps.size(), 1u);
  EXPECT_EQ(comps[0].edges(), (std::vector<LabeledEdge>{{"A", "B", Polarity::Negative}}));
}

TEST(Decompose, Errors) {
  const auto g = edges("A,+,B\n");
  EXPECT_EQ(error_code([&] { decompose(g, 1); }), "E_MAX_NODES");
  EXPECT_EQ(error_code([] { decompose(CausalGraph{}, 4); }), "E_EMPTY_GRAPH");
}

TEST(Decompose, ObesityScaleInput) {
  const auto g = testing::obesity_scale_graph();
  ASSERT_EQ(g.nodes().size(), 98u);
  ASSERT_EQ(g.edges().size(), 177u);
  const auto start = std::chrono::steady_clock::now();
  const auto comps = decompose(g, 4);
  const auto elapsed = std::chrono::steady_clock::now() - start;
  EXPECT_EQ(testing::check_decomposition(g, comps, 4), "");
  EXPECT_EQ(union_components(comps).edges().size(), 177u);
  EXPECT_LT(elapsed, std::chrono::seconds(1));
}

TEST(Decompose, RandomGraphsSatisfyContracts) {
  std::mt19937_64 rng(20240601);
  for (int i = 0; i < 300; ++i) {
    const auto g = testing::random_graph(rng);
    const std::size_t m = 2 + rng() % 4;
    const auto comps = decompose(g, m);
    ASSERT_EQ(testing::check_decomposition(g, comps, m), "") << "graph " << i << ", m=" << m;
    EXPECT_EQ(decompose(g, m), comps);  // pure
  }
}

TEST(Union, RestoresGraphEdges) {
  const auto g = edges(testing::kNutritionEdgeList);
  EXPECT_EQ(union_components(decompose(g, 3)), g);
}

TEST(Union, SingleComponentIsIdentity) {
  const auto c = testing::nutrition_component();
  const auto u = union_components(std::vector<Component>{c});
  EXPECT_EQ(u.nodes().size(), 6u);
  EXPECT_EQ(u.edges().size(), 5u);
}

TEST(Union, SharedNodeAppearsOnce) {
  const std::vector<Component> comps = {
      Component::from_edges({{"A", "B", Polarity::Positive}, {"B", "C", Polarity::Positive}}),
      Component::from_edges({{"C", "A", Polarity::Positive}})};
  const auto u = union_components(comps);
  EXPECT_EQ(u.nodes().size(), 3u);
  EXPECT_EQ(u.edges().size(), 3u);
}

TEST(Component, RejectsInvalidShapes) {
  EXPECT_EQ(error_code([] { Component::from_edges({}); }), "E_EMPTY_COMPONENT");
  EXPECT_EQ(error_code([] {
              Component::from_edges({{"A", "B", Polarity::Positive}, {"B", "A", Polarity::Negative}});
            }),
            "E_CYCLIC_COMPONENT");
  EXPECT_EQ(error_code([] {
              Component::from_edges({{"A", "B", Polarity::Positive}, {"C", "D", Polarity::Negative}});
            }),
            "E_DISCONNECTED_COMPONENT");
}

TEST(Serialization, JsonRoundTrip) {
  const auto g = edges(testing::kNutritionEdgeList);
  EXPECT_EQ(parse_graph(to_json(g).dump(), GraphFormat::Json), g);
  const auto c = testing::nutrition_component();
  EXPECT_EQ(component_from_json(to_json(c)), c);
}

TEST(Serialization, DetectFormat) {
  EXPECT_EQ(detect_format("x.json", ""), GraphFormat::Json);
  EXPECT_EQ(detect_format("x.csv", "{"), GraphFormat::EdgeList);
  EXPECT_EQ(detect_format("-", "  {\"nodes\":[]}"), GraphFormat::Json);
  EXPECT_EQ(detect_format("map.graph", "a,+,b"), GraphFormat::EdgeList);
}

}  // namespace
}  // namespace causaltext
