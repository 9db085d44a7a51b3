#include <gtest/gtest.h>

#include <algorithm>
#include <iterator>
#include <vector>

#include "sgg/graph.hpp"
#include "sgg/retrieval.hpp"
#include "sgg/rng.hpp"
#include "support/random_graph.hpp"

using namespace sgg;

namespace {

using Bag = Multiset<std::string>;

// Independent oracle: expand both multisets to sorted sequences and let the
// standard sorted-range algorithms do min/max multiplicity bookkeeping.
std::vector<std::string> expand(const Bag& m) {
  std::vector<std::string> out;
  for (const auto& [t, c] : m)
    for (std::size_t k = 0; k < c; ++k) out.push_back(t);
  return out;
}

double jaccard_oracle(const Bag& a, const Bag& b) {
  const auto x = expand(a), y = expand(b);
  std::vector<std::string> i, u;
  std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(i));
  std::set_union(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(u));
  return u.empty() ? 1.0 : static_cast<double>(i.size()) / static_cast<double>(u.size());
}

double simpson_oracle(const Bag& a, const Bag& b) {
  const auto x = expand(a), y = expand(b);
  if (x.empty() && y.empty()) return 1.0;
  if (x.empty() || y.empty()) return 0.0;
  std::vector<std::string> i;
  std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(i));
  return static_cast<double>(i.size()) / static_cast<double>(std::min(x.size(), y.size()));
}

Bag random_bag(Rng& rng, std::size_t max_card) {
  static const std::vector<std::string> alphabet{"a", "b", "c", "d"};
  Bag m;
  const std::size_t n = rng.index(max_card + 1);
  for (std::size_t k = 0; k < n; ++k) m.add(alphabet[rng.index(alphabet.size())]);
  return m;
}

AugmentedGraph nodes_only(std::initializer_list<std::pair<const std::string, std::size_t>> n) {
  AugmentedGraph g;
  g.nodes = Bag(n);
  return g;
}

}  // namespace

TEST(Jaccard, WorkedExamples) {
  EXPECT_DOUBLE_EQ(jaccard(Bag{{"chair", 2}, {"table", 1}}, Bag{{"chair", 1}, {"table", 1}}), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(jaccard(Bag{{"x", 1}}, Bag{{"y", 1}}), 0.0);
  EXPECT_DOUBLE_EQ(jaccard(Bag{{"x", 3}}, Bag{{"x", 3}}), 1.0);
}

TEST(Simpson, WorkedExamples) {
  EXPECT_DOUBLE_EQ(simpson(Bag{{"chair", 2}, {"table", 1}}, Bag{{"chair", 1}, {"table", 1}}), 1.0);
  EXPECT_DOUBLE_EQ(simpson(Bag{{"x", 1}, {"y", 3}}, Bag{{"y", 1}, {"z", 1}}), 0.5);
}

TEST(Coefficients, EmptySetConventions) {
  EXPECT_DOUBLE_EQ(jaccard(Bag{}, Bag{}), 1.0);
  EXPECT_DOUBLE_EQ(simpson(Bag{}, Bag{}), 1.0);
  EXPECT_DOUBLE_EQ(jaccard(Bag{}, Bag{{"x", 1}}), 0.0);
  EXPECT_DOUBLE_EQ(simpson(Bag{}, Bag{{"x", 1}}), 0.0);
  EXPECT_DOUBLE_EQ(simpson(Bag{{"x", 1}}, Bag{}), 0.0);
}

TEST(CoefficientsProperty, MatchSortedRangeOracle) {
  Rng rng(21);
  for (int trial = 0; trial < 3000; ++trial) {
    const Bag a = random_bag(rng, 7), b = random_bag(rng, 7);
    EXPECT_EQ(jaccard(a, b), jaccard_oracle(a, b));
    EXPECT_EQ(simpson(a, b), simpson_oracle(a, b));
  }
}

TEST(CoefficientsProperty, SymmetricBoundedAndSimpsonDominates) {
  Rng rng(22);
  for (int trial = 0; trial < 3000; ++trial) {
    const Bag a = random_bag(rng, 8), b = random_bag(rng, 8);
    const double j = jaccard(a, b), s = simpson(a, b);
    EXPECT_EQ(j, jaccard(b, a));
    EXPECT_EQ(s, simpson(b, a));
    EXPECT_GE(j, 0.0);
    EXPECT_LE(s, 1.0);
    EXPECT_GE(s, j);
  }
}

TEST(CoefficientsProperty, SubsetScoresOneUnderSimpson) {
  Rng rng(23);
  for (int trial = 0; trial < 500; ++trial) {
    const Bag a = random_bag(rng, 6);
    if (a.empty()) continue;
    Bag sub;
    for (const auto& [t, c] : a) sub.add(t, rng.index(c + 1));
    if (sub.empty()) continue;
    EXPECT_DOUBLE_EQ(simpson(sub, a), 1.0);
  }
}

TEST(GraphSimilarity, AveragesThreeComponents) {
  AugmentedGraph a, b;
  a.nodes = Bag{{"x", 1}};
  b.nodes = Bag{{"x", 1}};
  a.edges.add(ClassPair("x", "y"));
  a.triples.add(Triple{"x", "left", "y"});
  // nodes 1, edges 0, triples 0
  EXPECT_DOUBLE_EQ(graph_similarity(a, b, Coefficient::jaccard), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(similarity(a, b, Coefficient::jaccard, RetrievalMode::nodes_only), 1.0);
}

TEST(Retrieve, RanksByDescendingScore) {
  ScanIndex index;
  index.add("far", nodes_only({{"bed", 1}}));
  index.add("near", nodes_only({{"chair", 2}, {"table", 1}}));
  index.add("mid", nodes_only({{"chair", 1}, {"bed", 2}}));
  const auto ranked = retrieve(nodes_only({{"chair", 2}, {"table", 1}}), index, Coefficient::jaccard, RetrievalMode::nodes_only);
  ASSERT_EQ(ranked.size(), 3u);
  EXPECT_EQ(ranked[0].scene_id, "near");
  EXPECT_EQ(ranked[1].scene_id, "mid");
  EXPECT_EQ(ranked[2].scene_id, "far");
  EXPECT_DOUBLE_EQ(ranked[0].score, 1.0);
}

TEST(Retrieve, TiesKeepAscendingSceneId) {
  ScanIndex index;
  for (const std::string id : {"scene9", "scene1", "scene5", "scene3"}) index.add(id, nodes_only({{"cup", 1}}));
  const auto ranked = retrieve(nodes_only({{"cup", 1}}), index, Coefficient::simpson, RetrievalMode::full);
  ASSERT_EQ(ranked.size(), 4u);
  EXPECT_EQ(ranked[0].scene_id, "scene1");
  EXPECT_EQ(ranked[1].scene_id, "scene3");
  EXPECT_EQ(ranked[2].scene_id, "scene5");
  EXPECT_EQ(ranked[3].scene_id, "scene9");
}

TEST(RetrieveProperty, SelfQueryRanksFirstAmongDistinctGraphs) {
  Rng rng(24);
  ScanIndex index;
  std::vector<SceneGraph> graphs;
  for (int k = 0; k < 30; ++k) {
    auto g = fixtures::random_graph(rng, 8, "g" + std::to_string(k));
    graphs.push_back(g);
    index.add(g);
  }
  for (const auto& g : graphs) {
    const auto ranked = retrieve(to_multisets(g), index, Coefficient::jaccard, RetrievalMode::full);
    EXPECT_DOUBLE_EQ(ranked.front().score, 1.0);
    const bool found = std::any_of(ranked.begin(), ranked.end(), [&](const RankedScene& r) { return r.scene_id == g.scene_id() && r.score == 1.0; });
    EXPECT_TRUE(found);
  }
}

TEST(ScanIndex, DuplicateIdAndEmptyIndexThrow) {
  ScanIndex index;
  EXPECT_THROW(retrieve(AugmentedGraph{}, index, Coefficient::jaccard, RetrievalMode::full), EmptyIndex);
  index.add("a", AugmentedGraph{});
  EXPECT_THROW(index.add("a", AugmentedGraph{}), DataError);
}

TEST(DetectChanges, ReportsMultiplicityResidues) {
  AugmentedGraph a = nodes_only({{"chair", 3}, {"table", 1}});
  AugmentedGraph b = nodes_only({{"chair", 1}, {"lamp", 1}});
  a.triples.add(Triple{"chair", "left", "table"});
  const auto r = detect_changes(a, b);
  EXPECT_EQ(r.removed.nodes, (Bag{{"chair", 2}, {"table", 1}}));
  EXPECT_EQ(r.added.nodes, (Bag{{"lamp", 1}}));
  EXPECT_EQ(r.removed.triples.cardinality(), 1u);
  EXPECT_TRUE(r.added.triples.empty());
  EXPECT_TRUE(detect_changes(a, a).empty());
}

TEST(DetectChangesProperty, ResiduesReconcileCardinalities) {
  Rng rng(25);
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = to_multisets(fixtures::random_graph(rng));
    const auto b = to_multisets(fixtures::random_graph(rng));
    const auto r = detect_changes(a, b);
    // |A| - |A \ B| = |A ∩ B| = |B| - |B \ A|
    EXPECT_EQ(a.nodes.cardinality() - r.removed.nodes.cardinality(), b.nodes.cardinality() - r.added.nodes.cardinality());
    EXPECT_EQ(a.triples.cardinality() - r.removed.triples.cardinality(), b.triples.cardinality() - r.added.triples.cardinality());
    EXPECT_EQ(a.edges.cardinality() - r.removed.edges.cardinality(), intersection_size(a.edges, b.edges));
  }
}

TEST(Parsing, CoefficientAndModeStrings) {
  EXPECT_EQ(coefficient_from_string("jaccard"), Coefficient::jaccard);
  EXPECT_EQ(coefficient_from_string("simpson"), Coefficient::simpson);
  EXPECT_THROW(coefficient_from_string("dice"), ConfigError);
  EXPECT_EQ(retrieval_mode_from_string("full"), RetrievalMode::full);
  EXPECT_EQ(retrieval_mode_from_string("nodes-only"), RetrievalMode::nodes_only);
  EXPECT_THROW(retrieval_mode_from_string("edges"), ConfigError);
  EXPECT_STREQ(to_string(Coefficient::simpson), "simpson");
  EXPECT_STREQ(to_string(RetrievalMode::nodes_only), "nodes-only");
}
