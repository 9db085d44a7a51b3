#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>

#include "sgg/graph.hpp"
#include "sgg/hierarchy.hpp"

namespace sgg::vocab {

inline const std::string kFloor = "floor";
inline const std::string kWall = "wall";

// support
inline const std::string kStandingOn = "standing on";
inline const std::string kLyingOn = "lying on";
inline const std::string kHangingOn = "hanging on";
// proximity
inline const std::string kLeft = "left";
inline const std::string kRight = "right";
inline const std::string kFront = "front";
inline const std::string kBehind = "behind";
inline const std::string kCloseBy = "close by";
// comparative
inline const std::string kBiggerThan = "bigger than";
inline const std::string kSmallerThan = "smaller than";
inline const std::string kSameShape = "same shape as";
inline const std::string kSameMaterial = "same material as";
inline const std::string kDarkerThan = "darker than";
inline const std::string kSameAs = "same as";

inline const std::set<std::string>& support_predicates() {
  static const std::set<std::string> s{kStandingOn, kLyingOn, kHangingOn};
  return s;
}

inline const std::set<std::string>& proximity_predicates() {
  static const std::set<std::string> s{kLeft, kRight, kFront, kBehind, kCloseBy};
  return s;
}

/// View-dependent subset of the proximity predicates.
inline const std::set<std::string>& directional_predicates() {
  static const std::set<std::string> s{kLeft, kRight, kFront, kBehind};
  return s;
}

inline const std::set<std::string>& comparative_predicates() {
  static const std::set<std::string> s{kBiggerThan, kSmallerThan, kSameShape, kSameMaterial, kDarkerThan, kSameAs};
  return s;
}

inline bool is_support(const std::string& p) { return support_predicates().count(p) != 0; }
inline bool is_proximity(const std::string& p) { return proximity_predicates().count(p) != 0; }
inline bool is_comparative(const std::string& p) { return comparative_predicates().count(p) != 0; }

/// Mirror of a directional predicate under a 180 degree turn of the viewer.
inline std::string mirrored(const std::string& p) {
  if (p == kLeft) return kRight;
  if (p == kRight) return kLeft;
  if (p == kFront) return kBehind;
  if (p == kBehind) return kFront;
  return p;
}

/// Brightness rank of color tokens, darkest first.
inline const std::map<std::string, int>& brightness_rank() {
  static const std::map<std::string, int> r{{"black", 0}, {"brown", 1}, {"red", 2},  {"green", 3},
                                            {"blue", 4},  {"yellow", 5}, {"white", 6}};
  return r;
}

inline const std::set<std::string>& material_tokens() {
  static const std::set<std::string> s{"wooden", "metal", "plastic", "fabric", "glass", "ceramic", "leather", "paper"};
  return s;
}

inline const std::set<std::string>& shape_tokens() {
  static const std::set<std::string> s{"rectangular", "round", "cylindrical", "square", "flat", "L-shaped"};
  return s;
}

/// First static attribute of `node` drawn from `tokens`.
inline std::optional<std::string> static_attribute_in(const NodeInstance& node, const std::set<std::string>& tokens) {
  for (const auto& a : node.attributes)
    if (a.kind == AttributeKind::static_property && tokens.count(a.name) != 0) return a.name;
  return std::nullopt;
}

inline std::optional<std::string> color_of(const NodeInstance& node) {
  for (const auto& a : node.attributes)
    if (a.kind == AttributeKind::static_property && brightness_rank().count(a.name) != 0) return a.name;
  return std::nullopt;
}

/// Hypernym chains for the classes the synthetic generator emits.
inline const HypernymMap& default_hypernyms() {
  static const HypernymMap m{
      {"armchair", "chair"},         {"chair", "seat"},
      {"sofa", "seat"},              {"seat", "furniture"},
      {"table", "furniture"},        {"desk", "table"},
      {"bed", "furniture"},          {"cabinet", "furniture"},
      {"shelf", "furniture"},        {"furniture", "furnishing"},
      {"furnishing", "artifact"},    {"cup", "container"},
      {"bottle", "container"},       {"box", "container"},
      {"container", "instrumentality"}, {"instrumentality", "artifact"},
      {"book", "publication"},       {"publication", "artifact"},
      {"pillow", "cushion"},         {"cushion", "padding"},
      {"padding", "artifact"},       {"picture", "decoration"},
      {"decoration", "artifact"},    {"lamp", "source of illumination"},
      {"source of illumination", "artifact"}, {"tv", "electronic equipment"},
      {"electronic equipment", "artifact"}, {"plant", "organism"},
      {"floor", "surface"},          {"wall", "partition"},
      {"partition", "structure"},    {"surface", "structure"},
      {"structure", "artifact"},     {"artifact", "entity"},
      {"organism", "entity"},
  };
  return m;
}

}  // namespace sgg::vocab
