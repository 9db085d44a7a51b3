#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "sgg/error.hpp"
#include "sgg/multiset.hpp"

namespace sgg {

using NodeId = std::uint32_t;

/// Ordered class labels (c1, ..., cd): c1 is the annotated label, every
/// following entry a hypernym of its predecessor.
class ClassHierarchy {
 public:
  ClassHierarchy() : labels_{"object"} {}
  explicit ClassHierarchy(std::vector<std::string> labels) : labels_(std::move(labels)) {
    if (labels_.empty()) throw InvalidGraph("class hierarchy must have at least one label");
    std::set<std::string> seen;
    for (const auto& l : labels_) {
      if (l.empty()) throw InvalidGraph("class hierarchy contains an empty label");
      if (!seen.insert(l).second) throw InvalidGraph("class hierarchy repeats label '" + l + "'");
    }
  }

  const std::string& leaf() const { return labels_.front(); }
  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t depth() const { return labels_.size(); }

  friend bool operator==(const ClassHierarchy&, const ClassHierarchy&) = default;

 private:
  std::vector<std::string> labels_;
};

enum class AttributeKind : std::uint8_t { static_property, state, affordance };

inline const char* to_string(AttributeKind kind) {
  switch (kind) {
    case AttributeKind::static_property: return "static";
    case AttributeKind::state: return "state";
    case AttributeKind::affordance: return "affordance";
  }
  return "static";
}

inline AttributeKind attribute_kind_from_string(const std::string& s) {
  if (s == "static") return AttributeKind::static_property;
  if (s == "state") return AttributeKind::state;
  if (s == "affordance") return AttributeKind::affordance;
  throw ParseError("unknown attribute kind '" + s + "'");
}

struct Attribute {
  AttributeKind kind = AttributeKind::static_property;
  std::string name;

  friend auto operator<=>(const Attribute&, const Attribute&) = default;
};

struct NodeInstance {
  NodeId id = 0;
  ClassHierarchy hierarchy;
  std::set<Attribute> attributes;

  const std::string& label() const { return hierarchy.leaf(); }

  bool has_attribute(const std::string& name) const {
    for (const auto& a : attributes)
      if (a.name == name) return true;
    return false;
  }

  friend bool operator==(const NodeInstance&, const NodeInstance&) = default;
};

struct Edge {
  NodeId subject = 0;
  NodeId object = 0;
  std::set<std::string> predicates;

  friend bool operator==(const Edge&, const Edge&) = default;
};

using EdgeKey = std::pair<NodeId, NodeId>;

/// Directed multi-predicate scene graph. At most one Edge per ordered
/// (subject, object) pair; edges always reference existing nodes and carry
/// at least one predicate.
class SceneGraph {
 public:
  SceneGraph() = default;
  explicit SceneGraph(std::string scene_id) : scene_id_(std::move(scene_id)) {}

  const std::string& scene_id() const { return scene_id_; }
  void set_scene_id(std::string id) { scene_id_ = std::move(id); }

  const std::map<NodeId, NodeInstance>& nodes() const { return nodes_; }
  const std::map<EdgeKey, Edge>& edges() const { return edges_; }

  bool contains(NodeId id) const { return nodes_.count(id) != 0; }

  const NodeInstance& node(NodeId id) const {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw UnknownNode("node " + std::to_string(id) + " is not in graph '" + scene_id_ + "'");
    return it->second;
  }

  const Edge* find_edge(NodeId subject, NodeId object) const {
    auto it = edges_.find({subject, object});
    return it == edges_.end() ? nullptr : &it->second;
  }

  bool has_predicate(NodeId subject, NodeId object, const std::string& predicate) const {
    const Edge* e = find_edge(subject, object);
    return e != nullptr && e->predicates.count(predicate) != 0;
  }

  void add_node(NodeInstance node) {
    if (node.id == 0) throw InvalidGraph("node ids must be positive");
    const NodeId id = node.id;
    if (!nodes_.emplace(id, std::move(node)).second)
      throw InvalidGraph("duplicate node id " + std::to_string(id));
  }

  void replace_node(NodeInstance node) {
    if (!contains(node.id)) throw UnknownNode("node " + std::to_string(node.id) + " is not in graph");
    nodes_[node.id] = std::move(node);
  }

  /// Add `predicate` to the (subject, object) edge, creating it if needed.
  /// Idempotent per predicate.
  void merge_edge(NodeId subject, NodeId object, const std::string& predicate) {
    if (!contains(subject)) throw UnknownNode("unknown subject node " + std::to_string(subject));
    if (!contains(object)) throw UnknownNode("unknown object node " + std::to_string(object));
    if (subject == object) throw InvalidGraph("self edge on node " + std::to_string(subject));
    if (predicate.empty()) throw InvalidGraph("empty predicate");
    auto& edge = edges_[{subject, object}];
    edge.subject = subject;
    edge.object = object;
    edge.predicates.insert(predicate);
  }

  void remove_predicate(NodeId subject, NodeId object, const std::string& predicate) {
    auto it = edges_.find({subject, object});
    if (it == edges_.end()) return;
    it->second.predicates.erase(predicate);
    if (it->second.predicates.empty()) edges_.erase(it);
  }

  /// Remove a node together with all incident edges.
  void remove_node(NodeId id) {
    if (nodes_.erase(id) == 0) throw UnknownNode("node " + std::to_string(id) + " is not in graph");
    for (auto it = edges_.begin(); it != edges_.end();) {
      if (it->first.first == id || it->first.second == id)
        it = edges_.erase(it);
      else
        ++it;
    }
  }

  std::size_t predicate_count() const {
    std::size_t n = 0;
    for (const auto& [key, edge] : edges_) n += edge.predicates.size();
    return n;
  }

  friend bool operator==(const SceneGraph&, const SceneGraph&) = default;

 private:
  std::string scene_id_;
  std::map<NodeId, NodeInstance> nodes_;
  std::map<EdgeKey, Edge> edges_;
};

/// Functional form of SceneGraph::merge_edge.
inline SceneGraph merge_edge(SceneGraph graph, NodeId subject, NodeId object, const std::string& predicate) {
  graph.merge_edge(subject, object, predicate);
  return graph;
}

/// Unordered class pair token; stored sorted so (a,b) and (b,a) coincide.
struct ClassPair {
  std::string first;
  std::string second;

  ClassPair() = default;
  ClassPair(std::string a, std::string b) {
    if (b < a) std::swap(a, b);
    first = std::move(a);
    second = std::move(b);
  }

  friend auto operator<=>(const ClassPair&, const ClassPair&) = default;
};

/// Directed (subject class, predicate, object class) token.
struct Triple {
  std::string subject;
  std::string predicate;
  std::string object;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

/// The three multiset projections of a scene graph used for retrieval.
struct AugmentedGraph {
  Multiset<std::string> nodes;
  Multiset<ClassPair> edges;
  Multiset<Triple> triples;

  friend bool operator==(const AugmentedGraph&, const AugmentedGraph&) = default;
};

inline AugmentedGraph to_multisets(const SceneGraph& graph) {
  AugmentedGraph out;
  for (const auto& [id, node] : graph.nodes()) out.nodes.add(node.label());
  for (const auto& [key, edge] : graph.edges()) {
    const auto& s = graph.node(edge.subject).label();
    const auto& o = graph.node(edge.object).label();
    out.edges.add(ClassPair(s, o));
    for (const auto& p : edge.predicates) out.triples.add(Triple{s, p, o});
  }
  return out;
}

}  // namespace sgg
