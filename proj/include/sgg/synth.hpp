#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgg/error.hpp"
#include "sgg/geometry.hpp"
#include "sgg/graph.hpp"
#include "sgg/hierarchy.hpp"
#include "sgg/relations.hpp"
#include "sgg/retrieval.hpp"
#include "sgg/rng.hpp"
#include "sgg/scene_io.hpp"
#include "sgg/vocab.hpp"

namespace sgg::synth {

enum class Primitive : std::uint8_t { box, cylinder, plane };

/// Size/shape/attribute prior of one object class.
struct ClassPrior {
  std::string name;
  Primitive primitive = Primitive::box;
  std::vector<std::string> supporters;  // classes it may rest on; empty for structure
  bool offers_surface = false;
  double w_lo = 0, w_hi = 0, d_lo = 0, d_hi = 0, h_lo = 0, h_hi = 0;  // cylinder: w = diameter
  std::vector<std::string> colors;
  std::vector<std::string> materials;
  std::string shape;
  std::vector<std::pair<std::string, std::string>> states;  // toggleable (a, b) pairs
  std::vector<std::string> affordances;
  std::map<std::string, std::string> state_affordance;
};

/// Built-in class table. Order matters: a vocabulary of size K uses the
/// first K entries.
inline const std::vector<ClassPrior>& default_class_priors() {
  using P = Primitive;
  static const std::vector<ClassPrior> priors = {
      {"floor", P::plane, {}, true, 0, 0, 0, 0, 0, 0, {}, {"wooden", "ceramic"}, "flat", {}, {}, {}},
      {"wall", P::plane, {}, false, 0, 0, 0, 0, 0, 0, {"white", "yellow"}, {}, "flat", {}, {}, {}},
      {"table", P::box, {"floor"}, true, 0.9, 1.6, 0.6, 1.0, 0.7, 0.8, {"brown", "white", "black"}, {"wooden", "metal", "glass"}, "rectangular", {}, {"placing items on"}, {}},
      {"chair", P::box, {"floor"}, false, 0.4, 0.5, 0.4, 0.5, 0.8, 1.0, {"black", "brown", "red", "blue", "white"}, {"wooden", "metal", "plastic"}, "square", {}, {"sitting"}, {}},
      {"sofa", P::box, {"floor"}, true, 1.6, 2.2, 0.8, 1.0, 0.7, 0.9, {"blue", "green", "brown", "black", "red"}, {"fabric", "leather"}, "rectangular", {}, {"sitting"}, {}},
      {"bed", P::box, {"floor"}, true, 1.4, 2.0, 1.9, 2.1, 0.5, 0.6, {"white", "blue", "yellow"}, {"fabric", "wooden"}, "rectangular", {{"tidy", "messy"}}, {"lying"}, {}},
      {"cabinet", P::box, {"floor"}, true, 0.6, 1.0, 0.4, 0.6, 0.9, 1.8, {"brown", "white", "black"}, {"wooden", "metal"}, "rectangular", {{"closed", "open"}}, {}, {{"closed", "opening"}, {"open", "closing"}}},
      {"cup", P::cylinder, {"table", "cabinet"}, false, 0.07, 0.1, 0, 0, 0.08, 0.12, {"white", "red", "blue", "yellow"}, {"ceramic", "glass", "plastic"}, "cylindrical", {{"empty", "full"}}, {"drinking from"}, {}},
      {"bottle", P::cylinder, {"table", "cabinet"}, false, 0.06, 0.09, 0, 0, 0.2, 0.3, {"green", "blue", "white"}, {"glass", "plastic"}, "cylindrical", {{"empty", "full"}}, {}, {}},
      {"book", P::box, {"table", "cabinet", "bed", "sofa"}, false, 0.15, 0.25, 0.2, 0.3, 0.02, 0.05, {"red", "blue", "green", "black", "yellow"}, {"paper"}, "rectangular", {{"closed", "open"}}, {"reading"}, {}},
      {"pillow", P::box, {"bed", "sofa"}, false, 0.4, 0.6, 0.3, 0.4, 0.08, 0.12, {"white", "blue", "red", "yellow", "green"}, {"fabric"}, "rectangular", {}, {}, {}},
      {"picture", P::box, {"wall"}, false, 0.4, 0.8, 0.02, 0.02, 0.3, 0.6, {"blue", "green", "red", "yellow"}, {"paper", "wooden"}, "rectangular", {}, {}, {}},
      {"lamp", P::cylinder, {"table", "cabinet"}, false, 0.15, 0.25, 0, 0, 0.3, 0.5, {"white", "black", "yellow"}, {"metal", "plastic"}, "round", {{"off", "on"}}, {}, {{"off", "turning on"}, {"on", "turning off"}}},
      {"box", P::box, {"table", "floor"}, false, 0.2, 0.4, 0.2, 0.4, 0.15, 0.35, {"brown", "white"}, {"paper", "plastic"}, "square", {{"closed", "open"}}, {}, {}},
      {"plant", P::cylinder, {"floor", "table"}, false, 0.2, 0.4, 0, 0, 0.3, 0.8, {"green"}, {"plastic", "ceramic"}, "round", {}, {}, {}},
      {"armchair", P::box, {"floor"}, false, 0.7, 0.9, 0.7, 0.9, 0.8, 1.0, {"brown", "red", "green", "black"}, {"fabric", "leather"}, "square", {}, {"sitting"}, {}},
      {"shelf", P::box, {"floor"}, true, 0.8, 1.2, 0.3, 0.4, 1.2, 2.0, {"brown", "white"}, {"wooden", "metal"}, "rectangular", {}, {"placing items on"}, {}},
      {"tv", P::box, {"cabinet", "table"}, false, 0.8, 1.2, 0.05, 0.1, 0.5, 0.7, {"black"}, {"plastic"}, "flat", {{"off", "on"}}, {}, {{"off", "turning on"}, {"on", "turning off"}}},
  };
  return priors;
}

inline const ClassPrior& prior_for(const std::string& name) {
  for (const auto& p : default_class_priors())
    if (p.name == name) return p;
  throw InfeasibleSpec("no class prior for '" + name + "'");
}

struct SceneSpec {
  std::uint64_t seed = 0;
  std::size_t min_nodes = 4;
  std::size_t max_nodes = 9;
  std::size_t max_classes = 160;         // vocabulary cap: first K class priors
  std::vector<std::string> predicates;   // allowlist; empty keeps every predicate
  double room_min = 3.5;
  double room_max = 5.0;
  std::size_t max_retries = 50;
  ExtractionThresholds thresholds;
  HypernymMap hypernyms = vocab::default_hypernyms();
};

enum class PerturbationKind : std::uint8_t { move_instance, add_instance, remove_instance, toggle_state };

inline const char* to_string(PerturbationKind k) {
  switch (k) {
    case PerturbationKind::move_instance: return "move";
    case PerturbationKind::add_instance: return "add";
    case PerturbationKind::remove_instance: return "remove";
    case PerturbationKind::toggle_state: return "toggle_state";
  }
  return "move";
}

struct RescanSpec {
  std::uint64_t seed = 0;
  std::vector<PerturbationKind> ops{PerturbationKind::move_instance, PerturbationKind::add_instance, PerturbationKind::remove_instance,
                                    PerturbationKind::toggle_state};
  std::size_t op_count = 2;
};

/// A generated scene with its ground-truth graph and the reference view that
/// fixes its directional predicates.
struct SyntheticScene {
  Scene scene;
  SceneGraph graph;
  CameraPose reference;
};

struct AppliedPerturbation {
  PerturbationKind kind;
  NodeId instance = 0;
  std::string label;
  std::string detail;
};

/// What a rescan changed, at the level of instance ids.
struct PerturbationLog {
  std::vector<AppliedPerturbation> applied;
  std::vector<NodeId> removed_nodes;
  std::vector<NodeId> added_nodes;
  std::vector<RelationTriple> removed_relations;  // in the base graph only
  std::vector<RelationTriple> added_relations;    // in the rescan graph only
  std::vector<EdgeKey> removed_links;             // ordered pairs that lost every predicate
  std::vector<EdgeKey> added_links;               // ordered pairs that gained their first predicate
};

struct RescanResult {
  SyntheticScene rescan;
  PerturbationLog log;
};

namespace detail {

constexpr double kRoomHeight = 2.5;
constexpr double kFloorSpacing = 0.06;
constexpr double kSurfaceSpacing = 0.048;
constexpr double kSurfaceJitter = 0.15;
constexpr double kContactGap = 0.005;
constexpr double kFurnitureClearance = 0.15;
constexpr double kSurfaceClearance = 0.08;
constexpr double kSurfaceMargin = 0.03;
constexpr double kWallMargin = 0.1;
constexpr std::size_t kMinPoints = 256;
constexpr std::size_t kMaxPoints = 2048;
constexpr double kPointDensity = 600.0;  // points per m^2 before clamping

struct Placed {
  NodeInstance node;
  Primitive primitive = Primitive::box;
  BBox3 box;
  NodeId supporter = 0;  // 0 for floor and walls
  int wall_axis = -1;    // structure walls: 0 = x=0 wall, 1 = y=D wall; pictures: wall they hang on
  PointSet points;
};

struct Layout {
  double width = 4.0;
  double depth = 4.0;
  std::vector<Placed> objects;

  NodeId next_id() const {
    NodeId m = 0;
    for (const auto& o : objects) m = std::max(m, o.node.id);
    return m + 1;
  }
  const Placed* find(NodeId id) const {
    for (const auto& o : objects)
      if (o.node.id == id) return &o;
    return nullptr;
  }
  bool supports_something(NodeId id) const {
    return std::any_of(objects.begin(), objects.end(), [&](const Placed& o) { return o.supporter == id; });
  }
};

inline Vec3 quantized(const Vec3& p) { return {quantize_coordinate(p.x()), quantize_coordinate(p.y()), quantize_coordinate(p.z())}; }

/// Regular grid of points on an axis-aligned rectangle. `u`/`v` are the
/// in-plane axes, `fixed` is the coordinate along the normal axis.
inline void grid_face(PointSet& out, int normal_axis, double fixed, double u0, double u1, double v0, double v1, std::size_t nu, std::size_t nv,
                      double jitter, Rng& rng) {
  const int ua = (normal_axis + 1) % 3;
  const int va = (normal_axis + 2) % 3;
  const double du = (u1 - u0) / static_cast<double>(nu);
  const double dv = (v1 - v0) / static_cast<double>(nv);
  for (std::size_t i = 0; i < nu; ++i)
    for (std::size_t j = 0; j < nv; ++j) {
      Vec3 p;
      p[normal_axis] = fixed;
      p[ua] = u0 + du * (static_cast<double>(i) + 0.5 + (jitter > 0 ? rng.uniform(-jitter, jitter) : 0.0));
      p[va] = v0 + dv * (static_cast<double>(j) + 0.5 + (jitter > 0 ? rng.uniform(-jitter, jitter) : 0.0));
      out.push_back(p);
    }
}

inline std::size_t point_budget(double area) {
  return std::clamp(static_cast<std::size_t>(std::ceil(area * kPointDensity)), kMinPoints, kMaxPoints);
}

/// Surface samples of a closed box. The top face of a supporting object is
/// sampled at a fixed spacing so resting objects always find a contact.
inline PointSet sample_box(const BBox3& box, bool dense_top, Rng& rng) {
  const Vec3 e = box.extent();
  const double areas[3] = {e.y() * e.z(), e.z() * e.x(), e.x() * e.y()};  // faces normal to x, y, z
  const double total_area = 2 * (areas[0] + areas[1] + areas[2]);
  const std::size_t budget = point_budget(total_area);
  PointSet out;
  std::size_t used = 0;
  std::size_t top_nu = 0, top_nv = 0;
  if (dense_top) {
    top_nu = static_cast<std::size_t>(std::ceil(e.x() / kSurfaceSpacing));
    top_nv = static_cast<std::size_t>(std::ceil(e.y() / kSurfaceSpacing));
    used = top_nu * top_nv;
  }
  const std::size_t rest = budget > used ? budget - used : 0;
  const double rest_area = dense_top ? total_area - areas[2] : total_area;
  for (int axis = 0; axis < 3; ++axis) {
    const int ua = (axis + 1) % 3;
    const int va = (axis + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      const double fixed = side == 0 ? box.min[axis] : box.max[axis];
      std::size_t nu, nv;
      if (dense_top && axis == 2 && side == 1) {
        nu = top_nu;
        nv = top_nv;
      } else {
        const double c = rest_area > 0 ? static_cast<double>(rest) * areas[axis] / rest_area : 0.0;
        const double eu = std::max(e[ua], 1e-6), ev = std::max(e[va], 1e-6);
        nu = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(c * eu / ev))));
        nv = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(c / static_cast<double>(nu))));
        if (c < 1) nu = nv = 1;
      }
      grid_face(out, axis, fixed, box.min[ua], box.max[ua], box.min[va], box.max[va], nu, nv, kSurfaceJitter, rng);
    }
  }
  while (out.size() < kMinPoints) {
    // top up with uniform samples on random faces
    const int axis = static_cast<int>(rng.index(3));
    const int ua = (axis + 1) % 3;
    const int va = (axis + 2) % 3;
    Vec3 p;
    p[axis] = rng.bernoulli(0.5) ? box.min[axis] : box.max[axis];
    p[ua] = rng.uniform(box.min[ua], box.max[ua]);
    p[va] = rng.uniform(box.min[va], box.max[va]);
    out.push_back(p);
  }
  for (auto& p : out) p = quantized(p);
  return out;
}

/// Side and cap samples of an upright cylinder inscribed in `box`.
inline PointSet sample_cylinder(const BBox3& box, Rng& rng) {
  const Vec3 c = box.center();
  const double r = 0.5 * box.extent().x();
  const double h = box.extent().z();
  const double area = 2 * M_PI * r * h + 2 * M_PI * r * r;
  const std::size_t budget = point_budget(area);
  const auto cap = static_cast<std::size_t>(std::round(static_cast<double>(budget) * (M_PI * r * r) / area));
  const std::size_t side = budget - 2 * cap;
  PointSet out;
  const auto rings = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(std::sqrt(static_cast<double>(side) * h / (2 * M_PI * r)))));
  const auto per_ring = std::max<std::size_t>(3, side / rings);
  for (std::size_t i = 0; i < rings; ++i)
    for (std::size_t j = 0; j < per_ring; ++j) {
      const double a = 2 * M_PI * (static_cast<double>(j) + rng.uniform(-kSurfaceJitter, kSurfaceJitter)) / static_cast<double>(per_ring);
      const double z = box.min.z() + h * (static_cast<double>(i) + 0.5) / static_cast<double>(rings);
      out.emplace_back(c.x() + r * std::cos(a), c.y() + r * std::sin(a), z);
    }
  // sunflower pattern on both caps
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int s = 0; s < 2; ++s)
    for (std::size_t k = 0; k < std::max<std::size_t>(cap, 1); ++k) {
      const double rad = r * std::sqrt((static_cast<double>(k) + 0.5) / static_cast<double>(std::max<std::size_t>(cap, 1)));
      const double a = golden * static_cast<double>(k);
      out.emplace_back(c.x() + rad * std::cos(a), c.y() + rad * std::sin(a), s == 0 ? box.min.z() : box.max.z());
    }
  while (out.size() < kMinPoints) {
    const double a = rng.uniform(0, 2 * M_PI);
    out.emplace_back(c.x() + r * std::cos(a), c.y() + r * std::sin(a), rng.uniform(box.min.z(), box.max.z()));
  }
  for (auto& p : out) p = quantized(p);
  return out;
}

/// Grid on a thin axis-aligned rectangle, edges included so the samples span
/// the whole box.
inline PointSet sample_plane(const BBox3& box) {
  const Vec3 e = box.extent();
  int normal = 0;
  if (e.y() <= e.x() && e.y() <= e.z()) normal = 1;
  if (e.z() <= e.x() && e.z() <= e.y()) normal = 2;
  const int ua = (normal + 1) % 3;
  const int va = (normal + 2) % 3;
  const auto nu = static_cast<std::size_t>(std::ceil(e[ua] / kFloorSpacing));
  const auto nv = static_cast<std::size_t>(std::ceil(e[va] / kFloorSpacing));
  PointSet out;
  out.reserve((nu + 1) * (nv + 1));
  for (std::size_t i = 0; i <= nu; ++i)
    for (std::size_t j = 0; j <= nv; ++j) {
      Vec3 p;
      p[normal] = box.min[normal];
      p[ua] = box.min[ua] + e[ua] * static_cast<double>(i) / static_cast<double>(nu);
      p[va] = box.min[va] + e[va] * static_cast<double>(j) / static_cast<double>(nv);
      out.push_back(quantized(p));
    }
  return out;
}

inline PointSet sample_object(const Placed& obj, Rng& rng) {
  const auto& prior = prior_for(obj.node.label());
  switch (obj.primitive) {
    case Primitive::plane: return sample_plane(obj.box);
    case Primitive::cylinder: return sample_cylinder(obj.box, rng);
    case Primitive::box: return sample_box(obj.box, prior.offers_surface, rng);
  }
  return {};
}

inline void set_state_attributes(NodeInstance& node, const ClassPrior& prior, const std::string& state) {
  for (auto it = node.attributes.begin(); it != node.attributes.end();) {
    if (it->kind == AttributeKind::state || (it->kind == AttributeKind::affordance && [&] {
          for (const auto& [s, a] : prior.state_affordance)
            if (a == it->name) return true;
          return false;
        }()))
      it = node.attributes.erase(it);
    else
      ++it;
  }
  node.attributes.insert({AttributeKind::state, state});
  auto aff = prior.state_affordance.find(state);
  if (aff != prior.state_affordance.end()) node.attributes.insert({AttributeKind::affordance, aff->second});
}

inline NodeInstance make_node(NodeId id, const ClassPrior& prior, const HypernymMap& hypernyms, Rng& rng) {
  NodeInstance node{id, derive_hierarchy(prior.name, hypernyms), {}};
  if (!prior.colors.empty()) node.attributes.insert({AttributeKind::static_property, rng.pick(prior.colors)});
  if (!prior.materials.empty()) node.attributes.insert({AttributeKind::static_property, rng.pick(prior.materials)});
  if (!prior.shape.empty()) node.attributes.insert({AttributeKind::static_property, prior.shape});
  for (const auto& a : prior.affordances) node.attributes.insert({AttributeKind::affordance, a});
  if (!prior.states.empty()) {
    const auto& pair = rng.pick(prior.states);
    set_state_attributes(node, prior, rng.bernoulli(0.5) ? pair.first : pair.second);
  }
  return node;
}

inline bool footprints_clear(const BBox3& a, const BBox3& b, double clearance) {
  return a.max.x() + clearance <= b.min.x() || b.max.x() + clearance <= a.min.x() || a.max.y() + clearance <= b.min.y() ||
         b.max.y() + clearance <= a.min.y();
}

inline std::pair<double, double> footprint(const ClassPrior& prior, Rng& rng) {
  double w = rng.uniform(prior.w_lo, prior.w_hi);
  double d = prior.primitive == Primitive::cylinder ? w : rng.uniform(prior.d_lo, prior.d_hi);
  if (prior.primitive == Primitive::box && rng.bernoulli(0.5)) std::swap(w, d);
  return {w, d};
}

/// Try to find a box for `prior` resting on `supporter`. Returns nullopt when
/// the random proposal collides.
inline std::optional<Placed> propose(const Layout& layout, const ClassPrior& prior, const Placed& supporter, NodeId id, const HypernymMap& hyp,
                                     Rng& rng) {
  Placed obj;
  obj.primitive = prior.primitive;
  obj.supporter = supporter.node.id;
  const double h = rng.uniform(prior.h_lo, prior.h_hi);
  const std::string& sup_label = supporter.node.label();
  if (sup_label == vocab::kWall) {
    const double w = rng.uniform(prior.w_lo, prior.w_hi);
    const double t = prior.d_lo;
    const double zc = rng.uniform(1.65, 1.95);
    const int axis = supporter.wall_axis;
    const double len = axis == 0 ? layout.depth : layout.width;
    if (len < w + 2 * kWallMargin) return std::nullopt;
    const double s = rng.uniform(kWallMargin, len - kWallMargin - w);
    Vec3 lo, hi;
    if (axis == 0) {  // wall at x = 0
      lo = {kContactGap * 2, s, zc - h / 2};
      hi = {kContactGap * 2 + t, s + w, zc + h / 2};
    } else {  // wall at y = depth
      lo = {s, layout.depth - kContactGap * 2 - t, zc - h / 2};
      hi = {s + w, layout.depth - kContactGap * 2, zc + h / 2};
    }
    obj.box = BBox3(lo, hi);
    obj.wall_axis = axis;
    for (const auto& o : layout.objects) {
      if (o.supporter == supporter.node.id && o.wall_axis == axis &&
          !(obj.box.max.z() + kSurfaceClearance <= o.box.min.z() || o.box.max.z() + kSurfaceClearance <= obj.box.min.z() ||
            footprints_clear(obj.box, o.box, kSurfaceClearance)))
        return std::nullopt;
    }
  } else {
    auto [w, d] = footprint(prior, rng);
    double x0, x1, y0, y1, base;
    if (sup_label == vocab::kFloor) {
      x0 = kWallMargin;
      x1 = layout.width - kWallMargin - w;
      y0 = kWallMargin;
      y1 = layout.depth - kWallMargin - d;
      base = kContactGap;
    } else {
      x0 = supporter.box.min.x() + kSurfaceMargin;
      x1 = supporter.box.max.x() - kSurfaceMargin - w;
      y0 = supporter.box.min.y() + kSurfaceMargin;
      y1 = supporter.box.max.y() - kSurfaceMargin - d;
      base = supporter.box.max.z() + kContactGap;
    }
    if (x1 <= x0 || y1 <= y0) return std::nullopt;
    const double x = rng.uniform(x0, x1);
    const double y = rng.uniform(y0, y1);
    obj.box = BBox3(Vec3(x, y, base), Vec3(x + w, y + d, base + h));
    const double clearance = sup_label == vocab::kFloor ? kFurnitureClearance : kSurfaceClearance;
    for (const auto& o : layout.objects) {
      if (o.primitive == Primitive::plane || o.node.label() == "picture") continue;
      if (o.supporter == supporter.node.id && !footprints_clear(obj.box, o.box, clearance)) return std::nullopt;
    }
  }
  obj.node = make_node(id, prior, hyp, rng);
  obj.points = sample_object(obj, rng);
  return obj;
}

/// Supporter candidates in `layout` for class `prior`.
inline std::vector<const Placed*> supporters_for(const Layout& layout, const ClassPrior& prior) {
  std::vector<const Placed*> out;
  for (const auto& o : layout.objects)
    if (std::find(prior.supporters.begin(), prior.supporters.end(), o.node.label()) != prior.supporters.end()) out.push_back(&o);
  return out;
}

/// Place one object of class `prior` somewhere valid, or return false.
inline bool place_one(Layout& layout, const ClassPrior& prior, NodeId id, const HypernymMap& hyp, Rng& rng, int attempts = 40) {
  const auto sups = supporters_for(layout, prior);
  if (sups.empty()) return false;
  for (int a = 0; a < attempts; ++a) {
    const Placed& sup = *sups[rng.index(sups.size())];
    if (auto obj = propose(layout, prior, sup, id, hyp, rng)) {
      layout.objects.push_back(std::move(*obj));
      return true;
    }
  }
  return false;
}

inline CameraPose reference_view(const Layout& layout) {
  const Vec3 eye(layout.width / 2, -2.5, 1.6);
  const Vec3 target(layout.width / 2, layout.depth / 2, 1.6);
  return CameraPose::look_at(eye, target, Intrinsics{});
}

inline Scene assemble(const std::string& scene_id, const Layout& layout) {
  std::vector<const Placed*> order;
  for (const auto& o : layout.objects) order.push_back(&o);
  std::sort(order.begin(), order.end(), [](const Placed* a, const Placed* b) { return a->node.id < b->node.id; });
  PointSet points;
  std::vector<NodeId> mask;
  std::map<NodeId, NodeInstance> instances;
  for (const Placed* o : order) {
    points.insert(points.end(), o->points.begin(), o->points.end());
    mask.insert(mask.end(), o->points.size(), o->node.id);
    instances[o->node.id] = o->node;
  }
  return Scene(scene_id, std::move(points), std::move(mask), std::move(instances));
}

inline SceneGraph filter_predicates(SceneGraph graph, const std::vector<std::string>& allow) {
  if (allow.empty()) return graph;
  const std::set<std::string> keep(allow.begin(), allow.end());
  std::vector<RelationTriple> drop;
  for (const auto& [key, edge] : graph.edges())
    for (const auto& p : edge.predicates)
      if (keep.count(p) == 0) drop.push_back({key.first, p, key.second});
  for (const auto& r : drop) graph.remove_predicate(r.subject, r.object, r.predicate);
  return graph;
}

inline std::vector<ClassPrior> active_priors(const SceneSpec& spec) {
  const auto& all = default_class_priors();
  const std::size_t n = std::min(spec.max_classes, all.size());
  return {all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n)};
}

inline bool class_active(const SceneSpec& spec, const std::string& name) {
  for (const auto& p : active_priors(spec))
    if (p.name == name) return true;
  return false;
}

/// Rebuild the placement layout of an existing scene.
inline Layout layout_of(const SyntheticScene& s) {
  Layout layout;
  const auto floor = s.scene.find_by_label(vocab::kFloor);
  if (!floor) throw InfeasibleSpec("scene has no floor");
  const BBox3& fb = s.scene.bbox(*floor);
  layout.width = fb.max.x();
  layout.depth = fb.max.y();
  std::map<NodeId, NodeId> supporter;
  for (const auto& [child, parent] : support_candidates(s.scene))
    if (supporter.count(child) == 0) supporter[child] = parent;
  for (const auto& [id, node] : s.scene.instances()) {
    Placed o;
    o.node = node;
    o.box = s.scene.bbox(id);
    o.points = instance_points(s.scene, id);
    const auto& prior = prior_for(node.label());
    o.primitive = prior.primitive;
    if (node.label() == vocab::kWall) {
      o.wall_axis = o.box.extent().x() < o.box.extent().y() ? 0 : 1;
    } else if (node.label() != vocab::kFloor) {
      auto it = supporter.find(id);
      o.supporter = it == supporter.end() ? *floor : it->second;
      if (node.label() == "picture") o.wall_axis = o.box.extent().x() < o.box.extent().y() ? 0 : 1;
    }
    layout.objects.push_back(std::move(o));
  }
  return layout;
}

inline bool movable(const Layout& layout, const Placed& o) {
  return o.primitive != Primitive::plane && !layout.supports_something(o.node.id);
}

}  // namespace detail

/// Procedurally generate a labeled scene. The ground-truth graph is what the
/// relation extractor recovers from the emitted geometry (restricted to the
/// predicate allowlist), so generator and extractor agree by construction.
inline SyntheticScene generate_scene(const SceneSpec& spec) {
  using namespace detail;
  if (spec.min_nodes < 2 || spec.max_nodes < spec.min_nodes) throw InfeasibleSpec("node count range must satisfy 2 <= min <= max");
  if (spec.max_classes < 3) throw InfeasibleSpec("need at least floor, wall and one object class");
  const auto priors = active_priors(spec);
  std::vector<const ClassPrior*> object_classes;
  for (const auto& p : priors)
    if (p.primitive != Primitive::plane) object_classes.push_back(&p);
  const bool walls_allowed = class_active(spec, vocab::kWall);

  for (std::size_t attempt = 0; attempt < spec.max_retries; ++attempt) {
    Rng rng(Rng::mix(spec.seed, attempt));
    Layout layout;
    layout.width = quantize_coordinate(rng.uniform(spec.room_min, spec.room_max));
    layout.depth = quantize_coordinate(rng.uniform(spec.room_min, spec.room_max));
    const auto n_nodes = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(spec.min_nodes), static_cast<std::int64_t>(spec.max_nodes)));

    Placed floor;
    floor.node = make_node(1, prior_for(vocab::kFloor), spec.hypernyms, rng);
    floor.primitive = Primitive::plane;
    floor.box = BBox3(Vec3(0, 0, 0), Vec3(layout.width, layout.depth, 0));
    floor.points = sample_plane(floor.box);
    layout.objects.push_back(floor);

    std::size_t n_walls = walls_allowed && n_nodes >= 4 ? static_cast<std::size_t>(rng.uniform_int(0, std::min<std::int64_t>(2, static_cast<std::int64_t>(n_nodes) - 3))) : 0;
    for (std::size_t w = 0; w < n_walls; ++w) {
      Placed wall;
      wall.node = make_node(layout.next_id(), prior_for(vocab::kWall), spec.hypernyms, rng);
      wall.primitive = Primitive::plane;
      wall.wall_axis = static_cast<int>(w);
      wall.box = w == 0 ? BBox3(Vec3(0, 0, 0), Vec3(0, layout.depth, kRoomHeight))
                        : BBox3(Vec3(0, layout.depth, 0), Vec3(layout.width, layout.depth, kRoomHeight));
      wall.points = sample_plane(wall.box);
      layout.objects.push_back(wall);
    }

    bool ok = true;
    while (layout.objects.size() < n_nodes && ok) {
      std::vector<const ClassPrior*> candidates;
      for (const auto* p : object_classes)
        if (!supporters_for(layout, *p).empty()) candidates.push_back(p);
      bool placed = false;
      while (!candidates.empty() && !placed) {
        const std::size_t pick = rng.index(candidates.size());
        placed = place_one(layout, *candidates[pick], layout.next_id(), spec.hypernyms, rng);
        if (!placed) candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(pick));
      }
      ok = placed;
    }
    if (!ok) continue;

    SyntheticScene out;
    out.scene = assemble("scene-" + std::to_string(spec.seed), layout);
    out.reference = reference_view(layout);
    out.graph = filter_predicates(extract_graph(out.scene, out.reference, spec.thresholds), spec.predicates);
    return out;
  }
  throw InfeasibleSpec("could not place objects for seed " + std::to_string(spec.seed) + " after " + std::to_string(spec.max_retries) +
                       " attempts");
}

/// Instance-level difference between two graphs of the same room.
inline PerturbationLog diff_graphs(const SceneGraph& before, const SceneGraph& after) {
  PerturbationLog log;
  for (const auto& [id, n] : before.nodes())
    if (!after.contains(id)) log.removed_nodes.push_back(id);
  for (const auto& [id, n] : after.nodes())
    if (!before.contains(id)) log.added_nodes.push_back(id);
  auto relations = [](const SceneGraph& g) {
    std::set<RelationTriple> out;
    for (const auto& [key, edge] : g.edges())
      for (const auto& p : edge.predicates) out.insert({key.first, p, key.second});
    return out;
  };
  const auto rb = relations(before);
  const auto ra = relations(after);
  std::set_difference(rb.begin(), rb.end(), ra.begin(), ra.end(), std::back_inserter(log.removed_relations));
  std::set_difference(ra.begin(), ra.end(), rb.begin(), rb.end(), std::back_inserter(log.added_relations));
  for (const auto& [key, edge] : before.edges())
    if (!after.find_edge(key.first, key.second)) log.removed_links.push_back(key);
  for (const auto& [key, edge] : after.edges())
    if (!before.find_edge(key.first, key.second)) log.added_links.push_back(key);
  return log;
}

/// Apply `spec.op_count` random perturbations to a generated scene and
/// re-derive its graph. Static attributes carry over unchanged.
inline RescanResult generate_rescan(const SyntheticScene& base, const RescanSpec& spec, const SceneSpec& scene_spec = {}) {
  using namespace detail;
  Rng rng(Rng::mix(spec.seed, 0xC0FFEE));
  Layout layout = layout_of(base);
  std::vector<AppliedPerturbation> applied;
  // added instances never reuse an id, so ids identify instances across scans
  NodeId fresh_id = layout.next_id();

  for (std::size_t op = 0; op < spec.op_count; ++op) {
    std::vector<PerturbationKind> kinds = spec.ops;
    bool done = false;
    while (!kinds.empty() && !done) {
      const std::size_t pick = rng.index(kinds.size());
      const PerturbationKind kind = kinds[pick];
      switch (kind) {
        case PerturbationKind::remove_instance: {
          std::vector<std::size_t> idx;
          for (std::size_t i = 0; i < layout.objects.size(); ++i)
            if (movable(layout, layout.objects[i])) idx.push_back(i);
          if (idx.empty()) break;
          const std::size_t i = idx[rng.index(idx.size())];
          applied.push_back({kind, layout.objects[i].node.id, layout.objects[i].node.label(), "removed"});
          layout.objects.erase(layout.objects.begin() + static_cast<std::ptrdiff_t>(i));
          done = true;
          break;
        }
        case PerturbationKind::move_instance: {
          std::vector<NodeId> ids;
          for (const auto& o : layout.objects)
            if (movable(layout, o) && o.node.label() != "picture") ids.push_back(o.node.id);
          rng.shuffle(ids);
          for (NodeId id : ids) {
            auto at = std::find_if(layout.objects.begin(), layout.objects.end(), [&](const Placed& o) { return o.node.id == id; });
            Placed obj = std::move(*at);
            layout.objects.erase(at);
            const auto& prior = prior_for(obj.node.label());
            const auto sups = supporters_for(layout, prior);
            bool moved = false;
            for (int a = 0; a < 40 && !moved && !sups.empty(); ++a) {
              const Placed& sup = *sups[rng.index(sups.size())];
              if (sup.node.label() == vocab::kWall) continue;
              auto proposal = propose(layout, prior, sup, obj.node.id, scene_spec.hypernyms, rng);
              if (!proposal) continue;
              // keep the instance's size and identity; only its position changes
              const Vec3 offset = proposal->box.min - obj.box.min;
              const BBox3 moved_box(obj.box.min + offset, obj.box.max + offset);
              const bool on_floor = sup.node.label() == vocab::kFloor;
              bool clear = on_floor ? moved_box.max.x() <= layout.width - kWallMargin && moved_box.max.y() <= layout.depth - kWallMargin
                                    : moved_box.max.x() <= sup.box.max.x() - kSurfaceMargin && moved_box.max.y() <= sup.box.max.y() - kSurfaceMargin;
              const double clearance = on_floor ? kFurnitureClearance : kSurfaceClearance;
              for (const auto& o : layout.objects)
                if (o.supporter == sup.node.id && !footprints_clear(moved_box, o.box, clearance)) clear = false;
              if (!clear) continue;
              Placed candidate = obj;
              for (auto& p : candidate.points) p = quantized(p + offset);
              candidate.box = bbox_of(candidate.points);
              candidate.supporter = sup.node.id;
              applied.push_back({kind, obj.node.id, obj.node.label(), "moved onto " + sup.node.label() + " " + std::to_string(sup.node.id)});
              layout.objects.push_back(std::move(candidate));
              moved = true;
            }
            if (moved) {
              done = true;
              break;
            }
            layout.objects.push_back(std::move(obj));
          }
          break;
        }
        case PerturbationKind::add_instance: {
          const auto priors = active_priors(scene_spec);
          std::vector<const ClassPrior*> candidates;
          for (const auto& p : priors)
            if (p.primitive != Primitive::plane && !supporters_for(layout, p).empty()) candidates.push_back(&p);
          rng.shuffle(candidates);
          for (const auto* p : candidates) {
            const NodeId id = fresh_id;
            if (place_one(layout, *p, id, scene_spec.hypernyms, rng)) {
              ++fresh_id;
              applied.push_back({kind, id, p->name, "added"});
              done = true;
              break;
            }
          }
          break;
        }
        case PerturbationKind::toggle_state: {
          std::vector<std::size_t> idx;
          for (std::size_t i = 0; i < layout.objects.size(); ++i)
            if (!prior_for(layout.objects[i].node.label()).states.empty()) idx.push_back(i);
          if (idx.empty()) break;
          Placed& obj = layout.objects[idx[rng.index(idx.size())]];
          const auto& prior = prior_for(obj.node.label());
          for (const auto& [a, b] : prior.states) {
            if (obj.node.has_attribute(a)) {
              set_state_attributes(obj.node, prior, b);
              applied.push_back({kind, obj.node.id, obj.node.label(), a + " -> " + b});
              done = true;
              break;
            }
            if (obj.node.has_attribute(b)) {
              set_state_attributes(obj.node, prior, a);
              applied.push_back({kind, obj.node.id, obj.node.label(), b + " -> " + a});
              done = true;
              break;
            }
          }
          break;
        }
      }
      if (!done) kinds.erase(kinds.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    if (!done) throw InfeasibleSpec("no perturbation of the requested kinds applies to scene '" + base.scene.scene_id() + "'");
  }

  RescanResult out;
  if (applied.empty()) {
    out.rescan = base;
  } else {
    out.rescan.scene = assemble(base.scene.scene_id(), layout);
    out.rescan.reference = base.reference;
    out.rescan.graph = filter_predicates(extract_graph(out.rescan.scene, out.rescan.reference, scene_spec.thresholds), scene_spec.predicates);
  }
  out.log = diff_graphs(base.graph, out.rescan.graph);
  out.log.applied = std::move(applied);
  return out;
}

/// Translate an instance-level log into class-level multiset residues:
/// tokens of removed items minus tokens of added items, and vice versa.
inline ChangeResidues residues_from_log(const PerturbationLog& log, const SceneGraph& before, const SceneGraph& after) {
  AugmentedGraph lost, gained;
  for (NodeId id : log.removed_nodes) lost.nodes.add(before.node(id).label());
  for (NodeId id : log.added_nodes) gained.nodes.add(after.node(id).label());
  for (const auto& [s, o] : log.removed_links) lost.edges.add(ClassPair(before.node(s).label(), before.node(o).label()));
  for (const auto& [s, o] : log.added_links) gained.edges.add(ClassPair(after.node(s).label(), after.node(o).label()));
  for (const auto& r : log.removed_relations) lost.triples.add({before.node(r.subject).label(), r.predicate, before.node(r.object).label()});
  for (const auto& r : log.added_relations) gained.triples.add({after.node(r.subject).label(), r.predicate, after.node(r.object).label()});
  ChangeResidues out;
  out.removed = {difference(lost.nodes, gained.nodes), difference(lost.edges, gained.edges), difference(lost.triples, gained.triples)};
  out.added = {difference(gained.nodes, lost.nodes), difference(gained.edges, lost.edges), difference(gained.triples, lost.triples)};
  return out;
}

inline nlohmann::json log_to_json(const PerturbationLog& log) {
  using nlohmann::json;
  json applied = json::array();
  for (const auto& a : log.applied) applied.push_back({{"op", to_string(a.kind)}, {"instance", a.instance}, {"label", a.label}, {"detail", a.detail}});
  auto triples = [](const std::vector<RelationTriple>& v) {
    json out = json::array();
    for (const auto& r : v) out.push_back({{"subject", r.subject}, {"predicate", r.predicate}, {"object", r.object}});
    return out;
  };
  auto links = [](const std::vector<EdgeKey>& v) {
    json out = json::array();
    for (const auto& [s, o] : v) out.push_back({s, o});
    return out;
  };
  return {{"applied", applied},
          {"removed_nodes", log.removed_nodes},
          {"added_nodes", log.added_nodes},
          {"removed_relations", triples(log.removed_relations)},
          {"added_relations", triples(log.added_relations)},
          {"removed_links", links(log.removed_links)},
          {"added_links", links(log.added_links)}};
}

}  // namespace sgg::synth
