#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "sgg/error.hpp"
#include "sgg/graph.hpp"

namespace sgg {

using Vec3 = Eigen::Vector3d;
using PointSet = std::vector<Vec3>;

/// Axis-aligned box in meters.
struct BBox3 {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  BBox3() = default;
  BBox3(const Vec3& lo, const Vec3& hi) : min(lo), max(hi) {
    if ((lo.array() > hi.array()).any()) throw InvalidScene("bounding box min exceeds max");
  }

  bool valid() const { return (min.array() <= max.array()).all(); }
  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  bool contains(const Vec3& p) const { return (p.array() >= min.array()).all() && (p.array() <= max.array()).all(); }
  bool intersects(const BBox3& o) const { return (min.array() <= o.max.array()).all() && (o.min.array() <= max.array()).all(); }
  BBox3 expanded(double r) const { return BBox3(min.array() - r, max.array() + r); }
  Vec3 extent() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }
  double volume() const {
    const Vec3 e = extent();
    return e.x() * e.y() * e.z();
  }
};

inline BBox3 bbox_of(const PointSet& points) {
  if (points.empty()) throw EmptyPointSet("bounding box of an empty point set");
  BBox3 box;
  for (const auto& p : points) box.extend(p);
  return box;
}

inline Vec3 centroid(const PointSet& points) {
  if (points.empty()) throw EmptyPointSet("centroid of an empty point set");
  Vec3 sum = Vec3::Zero();
  for (const auto& p : points) sum += p;
  return sum / static_cast<double>(points.size());
}

/// Translate a point set so that its centroid is the origin. No rotation.
inline PointSet center_normalize(PointSet points) {
  const Vec3 c = centroid(points);
  for (auto& p : points) p -= c;
  return points;
}

/// z value at rank floor(0.1 * (n - 1)) of the sorted z coordinates.
inline double lowest_decile_z(const PointSet& points) {
  if (points.empty()) throw EmptyPointSet("decile of an empty point set");
  std::vector<double> z;
  z.reserve(points.size());
  for (const auto& p : points) z.push_back(p.z());
  const std::size_t k = (z.size() - 1) / 10;
  std::nth_element(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(k), z.end());
  return z[k];
}

/// Point cloud with a per-point instance mask (0 = unlabeled) and instance
/// metadata. Coordinates are gravity aligned with +z up.
class Scene {
 public:
  Scene() = default;
  Scene(std::string scene_id, PointSet points, std::vector<NodeId> mask, std::map<NodeId, NodeInstance> instances)
      : scene_id_(std::move(scene_id)), points_(std::move(points)), mask_(std::move(mask)), instances_(std::move(instances)) {
    if (points_.size() != mask_.size())
      throw InvalidScene("mask has " + std::to_string(mask_.size()) + " entries for " + std::to_string(points_.size()) + " points");
    for (const auto& [id, node] : instances_) {
      if (id == 0 || node.id != id) throw InvalidScene("instance table key/id mismatch");
    }
    for (std::size_t k = 0; k < mask_.size(); ++k) {
      const NodeId m = mask_[k];
      if (m == 0) continue;
      if (instances_.count(m) == 0) throw InvalidScene("mask id " + std::to_string(m) + " has no instance metadata");
      index_[m].push_back(k);
    }
    for (const auto& [id, idx] : index_) {
      BBox3 box;
      for (auto k : idx) box.extend(points_[k]);
      boxes_[id] = box;
    }
  }

  /// Scene whose instances carry no class information (prediction input).
  static Scene class_agnostic(std::string scene_id, PointSet points, std::vector<NodeId> mask) {
    std::map<NodeId, NodeInstance> instances;
    for (NodeId m : mask)
      if (m != 0 && instances.count(m) == 0) instances[m] = NodeInstance{m, ClassHierarchy{}, {}};
    return Scene(std::move(scene_id), std::move(points), std::move(mask), std::move(instances));
  }

  const std::string& scene_id() const { return scene_id_; }
  const PointSet& points() const { return points_; }
  const std::vector<NodeId>& mask() const { return mask_; }
  const std::map<NodeId, NodeInstance>& instances() const { return instances_; }
  std::size_t size() const { return points_.size(); }

  bool has_instance(NodeId id) const { return instances_.count(id) != 0; }

  const NodeInstance& instance(NodeId id) const {
    auto it = instances_.find(id);
    if (it == instances_.end()) throw UnknownInstance("instance " + std::to_string(id) + " is not in scene '" + scene_id_ + "'");
    return it->second;
  }

  std::vector<NodeId> instance_ids() const {
    std::vector<NodeId> ids;
    for (const auto& [id, node] : instances_) ids.push_back(id);
    return ids;
  }

  /// Indices of the points with mask id `id`, in scene order.
  const std::vector<std::size_t>& indices(NodeId id) const {
    static const std::vector<std::size_t> none;
    instance(id);
    auto it = index_.find(id);
    return it == index_.end() ? none : it->second;
  }

  /// Bounding box of the instance's points; throws EmptyPointSet when the
  /// instance has none.
  const BBox3& bbox(NodeId id) const {
    instance(id);
    auto it = boxes_.find(id);
    if (it == boxes_.end()) throw EmptyPointSet("instance " + std::to_string(id) + " has no points");
    return it->second;
  }

  std::optional<NodeId> find_by_label(const std::string& label) const {
    for (const auto& [id, node] : instances_)
      if (node.label() == label) return id;
    return std::nullopt;
  }

  friend bool operator==(const Scene& a, const Scene& b) {
    return a.scene_id_ == b.scene_id_ && a.points_ == b.points_ && a.mask_ == b.mask_ && a.instances_ == b.instances_;
  }

 private:
  std::string scene_id_;
  PointSet points_;
  std::vector<NodeId> mask_;
  std::map<NodeId, NodeInstance> instances_;
  std::map<NodeId, std::vector<std::size_t>> index_;
  std::map<NodeId, BBox3> boxes_;
};

/// Points of instance `id`, masked by the instance segmentation.
inline PointSet instance_points(const Scene& scene, NodeId id) {
  PointSet out;
  const auto& idx = scene.indices(id);
  out.reserve(idx.size());
  for (auto k : idx) out.push_back(scene.points()[k]);
  return out;
}

/// Edge context of an ordered instance pair: every scene point inside either
/// instance box, with channel 1 for points of `subject`, 2 for `object`, and
/// 0 for anything else.
struct PairPoints {
  PointSet points;
  std::vector<int> channel;
};

inline PairPoints pair_points(const Scene& scene, NodeId subject, NodeId object) {
  if (subject == object) throw DegeneratePair("pair extraction needs two distinct instances");
  const BBox3& bs = scene.bbox(subject);
  const BBox3& bo = scene.bbox(object);
  PairPoints out;
  const auto& pts = scene.points();
  const auto& mask = scene.mask();
  for (std::size_t k = 0; k < pts.size(); ++k) {
    if (!bs.contains(pts[k]) && !bo.contains(pts[k])) continue;
    out.points.push_back(pts[k]);
    out.channel.push_back(mask[k] == subject ? 1 : mask[k] == object ? 2 : 0);
  }
  return out;
}

struct Intrinsics {
  double fx = 525.0;
  double fy = 525.0;
  double cx = 319.5;
  double cy = 239.5;
  int width = 640;
  int height = 480;
};

/// World-to-camera rigid transform plus pinhole intrinsics. Camera frame:
/// +x right, +y down, +z forward (viewing direction).
class CameraPose {
 public:
  CameraPose() = default;
  CameraPose(const Eigen::Matrix4d& extrinsic, const Intrinsics& intrinsics) : extrinsic_(extrinsic), intrinsics_(intrinsics) {
    const Eigen::Matrix3d r = extrinsic_.topLeftCorner<3, 3>();
    if (!(r * r.transpose()).isApprox(Eigen::Matrix3d::Identity(), 1e-6)) throw InvalidCamera("extrinsic rotation is not orthonormal");
    if (std::abs(r.determinant() - 1.0) > 1e-6) throw InvalidCamera("extrinsic rotation has determinant != +1");
    if (std::abs(extrinsic_(3, 0)) + std::abs(extrinsic_(3, 1)) + std::abs(extrinsic_(3, 2)) > 1e-12 || extrinsic_(3, 3) != 1.0)
      throw InvalidCamera("extrinsic bottom row must be (0, 0, 0, 1)");
    if (intrinsics_.width <= 0 || intrinsics_.height <= 0) throw InvalidCamera("image size must be positive");
    if (intrinsics_.fx <= 0 || intrinsics_.fy <= 0) throw InvalidCamera("focal lengths must be positive");
  }

  /// Camera at `eye` looking at `target`, with world `up` projecting to -y.
  static CameraPose look_at(const Vec3& eye, const Vec3& target, const Intrinsics& intrinsics, const Vec3& up = Vec3::UnitZ()) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 right = forward.cross(up);
    if (right.norm() < 1e-9) throw InvalidCamera("look_at: viewing direction parallel to up vector");
    right.normalize();
    const Vec3 down = forward.cross(right);
    Eigen::Matrix3d r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();
    Eigen::Matrix4d e = Eigen::Matrix4d::Identity();
    e.topLeftCorner<3, 3>() = r;
    e.topRightCorner<3, 1>() = -r * eye;
    return CameraPose(e, intrinsics);
  }

  const Eigen::Matrix4d& extrinsic() const { return extrinsic_; }
  const Intrinsics& intrinsics() const { return intrinsics_; }

  Vec3 to_camera(const Vec3& p) const { return extrinsic_.topLeftCorner<3, 3>() * p + extrinsic_.topRightCorner<3, 1>(); }

  /// True when the point lies in front of the camera and inside the image.
  bool sees(const Vec3& p) const {
    const Vec3 c = to_camera(p);
    if (c.z() <= 0) return false;
    const double u = intrinsics_.fx * c.x() / c.z() + intrinsics_.cx;
    const double v = intrinsics_.fy * c.y() / c.z() + intrinsics_.cy;
    return u >= 0 && v >= 0 && u < intrinsics_.width && v < intrinsics_.height;
  }

  /// The same camera rotated by `angle` radians about the vertical axis
  /// through `pivot`.
  CameraPose rotated_about_vertical(const Vec3& pivot, double angle) const {
    Eigen::Matrix4d rot = Eigen::Matrix4d::Identity();
    rot.topLeftCorner<3, 3>() = Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
    Eigen::Matrix4d to_pivot = Eigen::Matrix4d::Identity();
    to_pivot.topRightCorner<3, 1>() = -pivot;
    Eigen::Matrix4d from_pivot = Eigen::Matrix4d::Identity();
    from_pivot.topRightCorner<3, 1>() = pivot;
    const Eigen::Matrix4d camera_motion = from_pivot * rot * to_pivot;
    Eigen::Matrix4d e = extrinsic_ * camera_motion.inverse();
    e.row(3) << 0, 0, 0, 1;
    return CameraPose(e, intrinsics_);
  }

 private:
  Eigen::Matrix4d extrinsic_ = Eigen::Matrix4d::Identity();
  Intrinsics intrinsics_;
};

}  // namespace sgg
