#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sgg/geometry.hpp"
#include "sgg/graph.hpp"
#include "sgg/vocab.hpp"

namespace sgg {

/// Geometric thresholds of the relation extractor (meters unless noted).
struct ExtractionThresholds {
  double support_radius = 0.05;
  double left_right = 0.1;
  double front_behind = 0.1;
  double close_by = 0.5;
  double size_ratio = 1.5;  // dimensionless volume ratio
  std::size_t min_pixels = 50;
  // semantic support heuristic: "lying" objects are flat and low
  double lying_aspect = 0.35;
  double lying_max_height = 0.3;
};

/// (supported instance, supporting instance)
using SupportPair = std::pair<NodeId, NodeId>;

struct RelationTriple {
  NodeId subject = 0;
  std::string predicate;
  NodeId object = 0;

  friend auto operator<=>(const RelationTriple&, const RelationTriple&) = default;
};

namespace detail {

/// Hash grid over one point set for fixed-radius "any neighbour" queries.
class RadiusGrid {
 public:
  RadiusGrid(const PointSet& points, const std::vector<std::size_t>& idx, double radius) : radius_(radius), points_(&points) {
    for (auto k : idx) cells_[key(cell_of(points[k]))].push_back(k);
  }

  bool any_within(const Vec3& p) const {
    const auto c = cell_of(p);
    const double r2 = radius_ * radius_;
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          auto it = cells_.find(key({c[0] + dx, c[1] + dy, c[2] + dz}));
          if (it == cells_.end()) continue;
          for (auto k : it->second)
            if (((*points_)[k] - p).squaredNorm() <= r2) return true;
        }
    return false;
  }

 private:
  using Cell = std::array<std::int64_t, 3>;
  Cell cell_of(const Vec3& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() / radius_)), static_cast<std::int64_t>(std::floor(p.y() / radius_)),
            static_cast<std::int64_t>(std::floor(p.z() / radius_))};
  }
  static std::uint64_t key(const Cell& c) {
    return (static_cast<std::uint64_t>(c[0] & 0x1FFFFF) << 42) | (static_cast<std::uint64_t>(c[1] & 0x1FFFFF) << 21) |
           static_cast<std::uint64_t>(c[2] & 0x1FFFFF);
  }

  double radius_;
  const PointSet* points_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

}  // namespace detail

/// Support candidates: (a, b) iff some point of a lies within `radius` of some
/// point of b and the lowest-decile z of a is above the centroid z of b. The
/// floor is never supported; walls without detected support rest on the floor.
inline std::set<SupportPair> support_candidates(const Scene& scene, double radius = 0.05) {
  struct Info {
    NodeId id;
    double decile_z;
    double centroid_z;
    BBox3 box;
  };
  std::vector<Info> infos;
  for (NodeId id : scene.instance_ids()) {
    const auto& idx = scene.indices(id);
    if (idx.empty()) continue;
    const PointSet pts = instance_points(scene, id);
    infos.push_back({id, lowest_decile_z(pts), centroid(pts).z(), scene.bbox(id)});
  }
  const auto floor = scene.find_by_label(vocab::kFloor);

  std::set<SupportPair> out;
  std::map<NodeId, detail::RadiusGrid> grids;
  for (const auto& a : infos) {
    if (floor && a.id == *floor) continue;
    const BBox3 reach = a.box.expanded(radius);
    for (const auto& b : infos) {
      if (a.id == b.id || !(a.decile_z > b.centroid_z) || !reach.intersects(b.box)) continue;
      auto it = grids.find(b.id);
      if (it == grids.end()) it = grids.emplace(b.id, detail::RadiusGrid(scene.points(), scene.indices(b.id), radius)).first;
      for (auto k : scene.indices(a.id)) {
        if (it->second.any_within(scene.points()[k])) {
          out.insert({a.id, b.id});
          break;
        }
      }
    }
  }
  if (floor) {
    for (const auto& [id, node] : scene.instances()) {
      if (node.label() != vocab::kWall) continue;
      const bool supported = std::any_of(out.begin(), out.end(), [&](const SupportPair& p) { return p.first == id; });
      if (!supported) out.insert({id, *floor});
    }
  }
  return out;
}

/// Unordered pairs (a < b) that share at least one supporter.
inline std::set<std::pair<NodeId, NodeId>> sibling_pairs(const std::set<SupportPair>& support) {
  std::map<NodeId, std::vector<NodeId>> children;
  for (const auto& [child, parent] : support) children[parent].push_back(child);
  std::set<std::pair<NodeId, NodeId>> out;
  for (const auto& [parent, kids] : children)
    for (std::size_t i = 0; i < kids.size(); ++i)
      for (std::size_t j = i + 1; j < kids.size(); ++j)
        out.insert({std::min(kids[i], kids[j]), std::max(kids[i], kids[j])});
  return out;
}

/// View-dependent proximity predicates between siblings, emitted in both
/// directions with mirrored predicates.
inline std::set<RelationTriple> proximity_relations(const Scene& scene, const std::set<SupportPair>& support, const CameraPose& view,
                                                    const ExtractionThresholds& t = {}) {
  std::map<NodeId, Vec3> centers;
  auto center = [&](NodeId id) -> const Vec3& {
    auto it = centers.find(id);
    if (it == centers.end()) it = centers.emplace(id, centroid(instance_points(scene, id))).first;
    return it->second;
  };
  std::set<RelationTriple> out;
  for (const auto& [a, b] : sibling_pairs(support)) {
    if (scene.indices(a).empty() || scene.indices(b).empty()) continue;
    const Vec3 ca = view.to_camera(center(a));
    const Vec3 cb = view.to_camera(center(b));
    const double dx = ca.x() - cb.x();
    const double dz = ca.z() - cb.z();
    if (dx < -t.left_right) {
      out.insert({a, vocab::kLeft, b});
      out.insert({b, vocab::kRight, a});
    } else if (dx > t.left_right) {
      out.insert({a, vocab::kRight, b});
      out.insert({b, vocab::kLeft, a});
    }
    if (dz < -t.front_behind) {
      out.insert({a, vocab::kFront, b});
      out.insert({b, vocab::kBehind, a});
    } else if (dz > t.front_behind) {
      out.insert({a, vocab::kBehind, b});
      out.insert({b, vocab::kFront, a});
    }
    if ((center(a) - center(b)).norm() < t.close_by) {
      out.insert({a, vocab::kCloseBy, b});
      out.insert({b, vocab::kCloseBy, a});
    }
  }
  return out;
}

struct ComparableNode {
  NodeInstance node;
  BBox3 box;
};

/// Box volume with every extent clamped to at least 1 cm, so flat structures
/// still compare by size.
inline double comparable_volume(const BBox3& box) {
  const Vec3 e = box.extent().cwiseMax(0.01);
  return e.x() * e.y() * e.z();
}

inline std::set<Attribute> static_attributes(const NodeInstance& n) {
  std::set<Attribute> out;
  for (const auto& a : n.attributes)
    if (a.kind == AttributeKind::static_property) out.insert(a);
  return out;
}

/// Attribute-comparison predicates between siblings.
inline std::set<RelationTriple> comparative_relations(const std::vector<ComparableNode>& nodes, const std::set<SupportPair>& support,
                                                      const ExtractionThresholds& t = {}) {
  std::map<NodeId, const ComparableNode*> by_id;
  for (const auto& n : nodes) by_id[n.node.id] = &n;
  std::set<RelationTriple> out;
  auto both = [&](NodeId a, NodeId b, const std::string& p) {
    out.insert({a, p, b});
    out.insert({b, p, a});
  };
  for (const auto& [a, b] : sibling_pairs(support)) {
    auto ia = by_id.find(a);
    auto ib = by_id.find(b);
    if (ia == by_id.end() || ib == by_id.end()) continue;
    const ComparableNode& na = *ia->second;
    const ComparableNode& nb = *ib->second;

    const double va = comparable_volume(na.box);
    const double vb = comparable_volume(nb.box);
    if (va > t.size_ratio * vb) {
      out.insert({a, vocab::kBiggerThan, b});
      out.insert({b, vocab::kSmallerThan, a});
    } else if (vb > t.size_ratio * va) {
      out.insert({b, vocab::kBiggerThan, a});
      out.insert({a, vocab::kSmallerThan, b});
    }

    const auto shape_a = vocab::static_attribute_in(na.node, vocab::shape_tokens());
    const auto shape_b = vocab::static_attribute_in(nb.node, vocab::shape_tokens());
    if (shape_a && shape_b && *shape_a == *shape_b) both(a, b, vocab::kSameShape);

    const auto mat_a = vocab::static_attribute_in(na.node, vocab::material_tokens());
    const auto mat_b = vocab::static_attribute_in(nb.node, vocab::material_tokens());
    if (mat_a && mat_b && *mat_a == *mat_b) both(a, b, vocab::kSameMaterial);

    const auto col_a = vocab::color_of(na.node);
    const auto col_b = vocab::color_of(nb.node);
    if (col_a && col_b) {
      const int ra = vocab::brightness_rank().at(*col_a);
      const int rb = vocab::brightness_rank().at(*col_b);
      if (ra < rb) out.insert({a, vocab::kDarkerThan, b});
      if (rb < ra) out.insert({b, vocab::kDarkerThan, a});
    }

    if (na.node.label() == nb.node.label() && static_attributes(na.node) == static_attributes(nb.node)) both(a, b, vocab::kSameAs);
  }
  return out;
}

/// Semantic support label from supporter class and object pose.
inline std::string support_label(const Scene& scene, NodeId supported, NodeId supporter, const ExtractionThresholds& t = {}) {
  if (scene.instance(supporter).label() == vocab::kWall) return vocab::kHangingOn;
  const Vec3 e = scene.bbox(supported).extent();
  const double horizontal = std::max(e.x(), e.y());
  if (e.z() < t.lying_aspect * horizontal && e.z() < t.lying_max_height) return vocab::kLyingOn;
  return vocab::kStandingOn;
}

inline std::vector<ComparableNode> comparable_nodes(const Scene& scene) {
  std::vector<ComparableNode> out;
  for (const auto& [id, node] : scene.instances())
    if (!scene.indices(id).empty()) out.push_back({node, scene.bbox(id)});
  return out;
}

/// Full 3D scene graph from geometry: support, proximity relative to the
/// reference view, and attribute comparisons.
inline SceneGraph extract_graph(const Scene& scene, const CameraPose& reference, const ExtractionThresholds& t = {}) {
  SceneGraph graph(scene.scene_id());
  for (const auto& [id, node] : scene.instances()) graph.add_node(node);
  const auto support = support_candidates(scene, t.support_radius);
  for (const auto& [child, parent] : support) graph.merge_edge(child, parent, support_label(scene, child, parent, t));
  for (const auto& r : proximity_relations(scene, support, reference, t)) graph.merge_edge(r.subject, r.object, r.predicate);
  for (const auto& r : comparative_relations(comparable_nodes(scene), support, t)) graph.merge_edge(r.subject, r.object, r.predicate);
  return graph;
}

/// Support pairs recorded in a graph's support edges.
inline std::set<SupportPair> support_pairs_of(const SceneGraph& graph) {
  std::set<SupportPair> out;
  for (const auto& [key, edge] : graph.edges())
    for (const auto& p : edge.predicates)
      if (vocab::is_support(p)) out.insert(key);
  return out;
}

inline std::size_t visible_point_count(const Scene& scene, NodeId id, const CameraPose& view) {
  std::size_t n = 0;
  for (auto k : scene.indices(id))
    if (view.sees(scene.points()[k])) ++n;
  return n;
}

/// Graph as seen from `view`: nodes with at least `min_pixels` projected
/// points survive, non-directional predicates between survivors are copied,
/// and left/right/front/behind are recomputed for the view.
inline SceneGraph render_graph_2d(const SceneGraph& graph, const Scene& scene, const CameraPose& view, std::size_t min_pixels,
                                  const ExtractionThresholds& t = {}) {
  SceneGraph out(graph.scene_id());
  for (const auto& [id, node] : graph.nodes()) {
    const std::size_t seen = scene.has_instance(id) ? visible_point_count(scene, id, view) : 0;
    if (seen >= min_pixels) out.add_node(node);
  }
  for (const auto& [key, edge] : graph.edges()) {
    if (!out.contains(key.first) || !out.contains(key.second)) continue;
    for (const auto& p : edge.predicates)
      if (vocab::directional_predicates().count(p) == 0) out.merge_edge(key.first, key.second, p);
  }
  std::set<SupportPair> support;
  for (const auto& pair : support_pairs_of(graph))
    if (scene.has_instance(pair.first) && scene.has_instance(pair.second)) support.insert(pair);
  for (const auto& r : proximity_relations(scene, support, view, t)) {
    if (vocab::directional_predicates().count(r.predicate) == 0) continue;
    if (out.contains(r.subject) && out.contains(r.object)) out.merge_edge(r.subject, r.object, r.predicate);
  }
  return out;
}

inline SceneGraph render_graph_2d(const SceneGraph& graph, const Scene& scene, const CameraPose& view, const ExtractionThresholds& t = {}) {
  return render_graph_2d(graph, scene, view, t.min_pixels, t);
}

}  // namespace sgg
