#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgg/error.hpp"
#include "sgg/graph.hpp"
#include "sgg/multiset.hpp"

namespace sgg {

/// |A ∩ B| / |A ∪ B| with min/max multiplicities. Two empty sets score 1.
template <class Token>
double jaccard(const Multiset<Token>& a, const Multiset<Token>& b) {
  const std::size_t u = union_size(a, b);
  if (u == 0) return 1.0;
  return static_cast<double>(intersection_size(a, b)) / static_cast<double>(u);
}

/// Szymkiewicz-Simpson overlap |A ∩ B| / min(|A|, |B|). Two empty sets score
/// 1; one empty set against a non-empty one scores 0.
template <class Token>
double simpson(const Multiset<Token>& a, const Multiset<Token>& b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  const std::size_t m = std::min(a.cardinality(), b.cardinality());
  return static_cast<double>(intersection_size(a, b)) / static_cast<double>(m);
}

enum class Coefficient : std::uint8_t { jaccard, simpson };
enum class RetrievalMode : std::uint8_t { nodes_only, full };

inline Coefficient coefficient_from_string(const std::string& s) {
  if (s == "jaccard") return Coefficient::jaccard;
  if (s == "simpson") return Coefficient::simpson;
  throw ConfigError("unknown coefficient '" + s + "' (expected jaccard or simpson)");
}

inline const char* to_string(Coefficient c) { return c == Coefficient::jaccard ? "jaccard" : "simpson"; }

inline RetrievalMode retrieval_mode_from_string(const std::string& s) {
  if (s == "full") return RetrievalMode::full;
  if (s == "nodes-only" || s == "nodes_only") return RetrievalMode::nodes_only;
  throw ConfigError("unknown retrieval mode '" + s + "' (expected full or nodes-only)");
}

inline const char* to_string(RetrievalMode m) { return m == RetrievalMode::full ? "full" : "nodes-only"; }

template <class Token>
double coefficient(const Multiset<Token>& a, const Multiset<Token>& b, Coefficient c) {
  return c == Coefficient::jaccard ? jaccard(a, b) : simpson(a, b);
}

/// Unweighted mean of the coefficient over nodes, class-pair edges and triples.
inline double graph_similarity(const AugmentedGraph& a, const AugmentedGraph& b, Coefficient c) {
  return (coefficient(a.nodes, b.nodes, c) + coefficient(a.edges, b.edges, c) + coefficient(a.triples, b.triples, c)) / 3.0;
}

inline double similarity(const AugmentedGraph& a, const AugmentedGraph& b, Coefficient c, RetrievalMode mode) {
  return mode == RetrievalMode::full ? graph_similarity(a, b, c) : coefficient(a.nodes, b.nodes, c);
}

/// Reference pool keyed by scene id.
class ScanIndex {
 public:
  void add(const std::string& scene_id, AugmentedGraph graph) {
    if (!entries_.emplace(scene_id, std::move(graph)).second) throw DataError("duplicate scene id '" + scene_id + "' in scan index");
  }
  void add(const SceneGraph& graph) { add(graph.scene_id(), to_multisets(graph)); }

  const std::map<std::string, AugmentedGraph>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  std::map<std::string, AugmentedGraph> entries_;
};

struct RankedScene {
  std::string scene_id;
  double score = 0.0;

  friend bool operator==(const RankedScene&, const RankedScene&) = default;
};

/// Every pool entry ranked by descending score; equal scores keep ascending
/// scene id order.
inline std::vector<RankedScene> retrieve(const AugmentedGraph& query, const ScanIndex& index, Coefficient c, RetrievalMode mode) {
  if (index.empty()) throw EmptyIndex("retrieval against an empty scan index");
  std::vector<RankedScene> out;
  out.reserve(index.size());
  for (const auto& [id, g] : index.entries()) out.push_back({id, similarity(query, g, c, mode)});
  // entries are already in ascending id order, so a stable sort keeps the tie rule
  std::stable_sort(out.begin(), out.end(), [](const RankedScene& a, const RankedScene& b) { return a.score > b.score; });
  return out;
}

/// Unmatched parts of two augmented graphs: `removed` = a minus b and
/// `added` = b minus a, per component, by multiplicity subtraction.
struct ChangeResidues {
  AugmentedGraph removed;
  AugmentedGraph added;

  bool empty() const {
    return removed.nodes.empty() && removed.edges.empty() && removed.triples.empty() && added.nodes.empty() && added.edges.empty() &&
           added.triples.empty();
  }
  friend bool operator==(const ChangeResidues&, const ChangeResidues&) = default;
};

inline ChangeResidues detect_changes(const AugmentedGraph& a, const AugmentedGraph& b) {
  ChangeResidues out;
  out.removed = {difference(a.nodes, b.nodes), difference(a.edges, b.edges), difference(a.triples, b.triples)};
  out.added = {difference(b.nodes, a.nodes), difference(b.edges, a.edges), difference(b.triples, a.triples)};
  return out;
}

/// Multisets as sorted [token, count] lists; tokens of edges are [a, b] and of
/// triples [subject, predicate, object].
inline nlohmann::json to_json(const AugmentedGraph& g) {
  using nlohmann::json;
  json nodes = json::array(), edges = json::array(), triples = json::array();
  for (const auto& [t, n] : g.nodes) nodes.push_back({t, n});
  for (const auto& [t, n] : g.edges) edges.push_back({json::array({t.first, t.second}), n});
  for (const auto& [t, n] : g.triples) triples.push_back({json::array({t.subject, t.predicate, t.object}), n});
  return {{"nodes", nodes}, {"edges", edges}, {"triples", triples}};
}

inline nlohmann::json to_json(const ChangeResidues& r) { return {{"removed", to_json(r.removed)}, {"added", to_json(r.added)}}; }

}  // namespace sgg
