#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "sgg/error.hpp"
#include "sgg/graph.hpp"
#include "sgg/retrieval.hpp"
#include "sgg/scores.hpp"

namespace sgg {

/// Hit/denominator pair; recall is undefined (skipped) when total is 0.
struct RecallCount {
  std::size_t hits = 0;
  std::size_t total = 0;

  std::optional<double> recall() const {
    if (total == 0) return std::nullopt;
    return static_cast<double>(hits) / static_cast<double>(total);
  }
  RecallCount& operator+=(const RecallCount& o) {
    hits += o.hits;
    total += o.total;
    return *this;
  }
};

namespace detail {

inline std::optional<std::size_t> index_of(const std::vector<std::string>& v, const std::string& s) {
  auto it = std::find(v.begin(), v.end(), s);
  if (it == v.end()) return std::nullopt;
  return static_cast<std::size_t>(it - v.begin());
}

/// Rank (0-based) of column `c` in row `r` under descending score with ties
/// broken by ascending column index.
inline std::size_t rank_in_row(const Eigen::MatrixXd& m, Eigen::Index r, Eigen::Index c) {
  std::size_t rank = 0;
  const double v = m(r, c);
  for (Eigen::Index k = 0; k < m.cols(); ++k)
    if (m(r, k) > v || (m(r, k) == v && k < c)) ++rank;
  return rank;
}

/// Column indices of a row ordered by descending value, ties by index.
inline std::vector<Eigen::Index> order_row(const Eigen::MatrixXd& m, Eigen::Index r) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index k = 0; k < m.cols(); ++k) idx[static_cast<std::size_t>(k)] = k;
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return m(r, a) > m(r, b); });
  return idx;
}

}  // namespace detail

/// One scored (subject, predicate, object) candidate with class labels.
struct TripletCandidate {
  double score = 0.0;
  NodeId subject = 0;
  NodeId object = 0;
  std::size_t predicate = 0;
  std::size_t subject_class = 0;
  std::size_t object_class = 0;

  auto key() const { return std::make_tuple(subject, object, predicate, subject_class, object_class); }
};

/// Descending score; ties by (subject id, object id, predicate index, subject
/// class, object class).
inline bool candidate_before(const TripletCandidate& a, const TripletCandidate& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.key() < b.key();
}

/// The n best candidates over every ordered pair x subject class x predicate x
/// object class, scored P(subject class) * P(predicate) * P(object class).
/// Classes ranked below n for a node cannot reach the global top n, so only
/// the top min(n, C) classes per node are enumerated.
inline std::vector<TripletCandidate> top_triplets(const PredictionScores& s, std::size_t n) {
  if (n == 0) return {};
  const auto c_keep = static_cast<std::size_t>(std::min<Eigen::Index>(static_cast<Eigen::Index>(n), s.object_probs.cols()));
  std::vector<std::vector<Eigen::Index>> top_classes(s.nodes.size());
  for (std::size_t i = 0; i < s.nodes.size(); ++i) {
    auto order = detail::order_row(s.object_probs, static_cast<Eigen::Index>(i));
    order.resize(c_keep);
    top_classes[i] = std::move(order);
  }
  std::map<NodeId, std::size_t> index;
  for (std::size_t i = 0; i < s.nodes.size(); ++i) index[s.nodes[i]] = i;
  std::vector<TripletCandidate> all;
  for (std::size_t e = 0; e < s.pairs.size(); ++e) {
    const std::size_t si = index.at(s.pairs[e].first);
    const std::size_t oi = index.at(s.pairs[e].second);
    for (std::size_t p = 0; p < s.predicates.size(); ++p) {
      const double pp = s.predicate_probs(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(p));
      for (Eigen::Index cs : top_classes[si])
        for (Eigen::Index co : top_classes[oi])
          all.push_back({s.object_probs(static_cast<Eigen::Index>(si), cs) * pp * s.object_probs(static_cast<Eigen::Index>(oi), co),
                         s.pairs[e].first, s.pairs[e].second, p, static_cast<std::size_t>(cs), static_cast<std::size_t>(co)});
    }
  }
  const std::size_t keep = std::min(n, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), candidate_before);
  all.resize(keep);
  return all;
}

/// Ground-truth triples found among the top n candidates. A triple counts when
/// its ids, predicate and both node classes match a kept candidate.
inline RecallCount triplet_hits(const PredictionScores& s, const SceneGraph& gt, std::size_t n) {
  std::set<std::tuple<NodeId, NodeId, std::size_t, std::size_t, std::size_t>> kept;
  for (const auto& c : top_triplets(s, n)) kept.insert(c.key());
  RecallCount out;
  for (const auto& [key, edge] : gt.edges()) {
    const auto cs = detail::index_of(s.classes, gt.node(key.first).label());
    const auto co = detail::index_of(s.classes, gt.node(key.second).label());
    for (const auto& p : edge.predicates) {
      ++out.total;
      const auto pi = detail::index_of(s.predicates, p);
      if (cs && co && pi && kept.count({key.first, key.second, *pi, *cs, *co})) ++out.hits;
    }
  }
  return out;
}

inline std::optional<double> triplet_recall(const PredictionScores& s, const SceneGraph& gt, std::size_t n) {
  return triplet_hits(s, gt, n).recall();
}

/// Nodes whose true class is among their n highest-scored classes.
inline RecallCount object_hits(const PredictionScores& s, const SceneGraph& gt, std::size_t n) {
  RecallCount out;
  for (const auto& [id, node] : gt.nodes()) {
    ++out.total;
    const auto c = detail::index_of(s.classes, node.label());
    if (!c) continue;
    const std::size_t i = s.node_index(id);
    if (detail::rank_in_row(s.object_probs, static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(*c)) < n) ++out.hits;
  }
  return out;
}

inline std::optional<double> object_recall(const PredictionScores& s, const SceneGraph& gt, std::size_t n) {
  return object_hits(s, gt, n).recall();
}

/// Ground-truth (edge, predicate) slots whose predicate is among the edge's n
/// highest-scored predicates; a multi-predicate edge contributes one slot per
/// predicate.
inline RecallCount predicate_hits(const PredictionScores& s, const SceneGraph& gt, std::size_t n) {
  std::map<EdgeKey, std::size_t> pair_index;
  for (std::size_t e = 0; e < s.pairs.size(); ++e) pair_index[s.pairs[e]] = e;
  RecallCount out;
  for (const auto& [key, edge] : gt.edges()) {
    auto it = pair_index.find(key);
    for (const auto& p : edge.predicates) {
      ++out.total;
      const auto pi = detail::index_of(s.predicates, p);
      if (it == pair_index.end() || !pi) continue;
      if (detail::rank_in_row(s.predicate_probs, static_cast<Eigen::Index>(it->second), static_cast<Eigen::Index>(*pi)) < n) ++out.hits;
    }
  }
  return out;
}

inline std::optional<double> predicate_recall(const PredictionScores& s, const SceneGraph& gt, std::size_t n) {
  return predicate_hits(s, gt, n).recall();
}

/// Fraction of queries whose true scene is ranked within the first k.
inline double retrieval_topk(const std::map<std::string, std::vector<RankedScene>>& assignments, const std::map<std::string, std::string>& truth,
                             std::size_t k) {
  if (assignments.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& [query, ranking] : assignments) {
    auto t = truth.find(query);
    if (t == truth.end()) throw MissingGroundTruth("query '" + query + "' has no ground-truth scene");
    auto it = std::find_if(ranking.begin(), ranking.end(), [&](const RankedScene& r) { return r.scene_id == t->second; });
    if (it == ranking.end()) throw MissingGroundTruth("true scene '" + t->second + "' of query '" + query + "' is not in the pool");
    if (static_cast<std::size_t>(it - ranking.begin()) < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(assignments.size());
}

}  // namespace sgg
