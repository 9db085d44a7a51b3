#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sgg/error.hpp"
#include "sgg/graph.hpp"

namespace sgg {

/// Network output for one scene: a class distribution per node and an
/// independent probability per predicate for every ordered node pair. A pair
/// with every probability below 0.5 is read as "no relation".
struct PredictionScores {
  std::vector<std::string> classes;
  std::vector<std::string> predicates;
  std::vector<NodeId> nodes;
  Eigen::MatrixXd object_probs;  // nodes x classes, rows sum to 1
  std::vector<EdgeKey> pairs;
  Eigen::MatrixXd predicate_probs;  // pairs x predicates, entries in [0, 1]

  std::size_t node_index(NodeId id) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i] == id) return i;
    throw UnknownNode("node " + std::to_string(id) + " has no scores");
  }

  /// Index of the highest-probability class; ties go to the lower index.
  std::size_t top_class(std::size_t node) const {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < object_probs.cols(); ++c)
      if (object_probs(static_cast<Eigen::Index>(node), c) > object_probs(static_cast<Eigen::Index>(node), best)) best = c;
    return static_cast<std::size_t>(best);
  }
};

/// Predicted scene graph: every node labeled with its top class, every
/// predicate with probability >= threshold emitted as an edge.
inline SceneGraph scores_to_graph(const PredictionScores& s, const std::string& scene_id, double threshold = 0.5) {
  SceneGraph g(scene_id);
  for (std::size_t i = 0; i < s.nodes.size(); ++i) g.add_node(NodeInstance{s.nodes[i], ClassHierarchy({s.classes[s.top_class(i)]}), {}});
  for (std::size_t e = 0; e < s.pairs.size(); ++e)
    for (std::size_t p = 0; p < s.predicates.size(); ++p)
      if (s.predicate_probs(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(p)) >= threshold)
        g.merge_edge(s.pairs[e].first, s.pairs[e].second, s.predicates[p]);
  return g;
}

/// -alpha_t (1 - p_t)^gamma log p_t.
inline double focal_loss(double p_t, double alpha_t, double gamma) {
  if (!(p_t > 0.0) || p_t > 1.0) throw DomainError("focal loss needs p_t in (0, 1], got " + std::to_string(p_t));
  if (!(alpha_t > 0.0)) throw DomainError("focal loss needs alpha_t > 0");
  if (gamma < 0.0) throw DomainError("focal loss needs gamma >= 0");
  return -alpha_t * std::pow(1.0 - p_t, gamma) * std::log(p_t);
}

}  // namespace sgg
