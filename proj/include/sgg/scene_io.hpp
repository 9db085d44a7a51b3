#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgg/error.hpp"
#include "sgg/geometry.hpp"
#include "sgg/graph.hpp"
#include "sgg/graph_io.hpp"

namespace sgg {

/// Point cloud file: ASCII PLY header followed by one `x y z instance_id`
/// row per point. Coordinates are written with 6 decimals (micrometers).
///
///     ply
///     format ascii 1.0
///     comment scene_id <id>
///     element vertex <N>
///     property double x
///     property double y
///     property double z
///     property int instance_id
///     end_header
///     0.125000 1.500000 0.000000 1
struct PointCloudFile {
  std::string scene_id;
  PointSet points;
  std::vector<NodeId> mask;
};

/// Round a coordinate to the precision the point-cloud file keeps, so that
/// written and re-read scenes compare equal.
inline double quantize_coordinate(double v) {
  const double q = std::round(v * 1e6) / 1e6;
  return q == 0.0 ? 0.0 : q;  // drop negative zero
}

inline std::string format_point_cloud(const std::string& scene_id, const PointSet& points, const std::vector<NodeId>& mask) {
  if (points.size() != mask.size()) throw InvalidScene("mask length differs from point count");
  std::string out;
  out.reserve(points.size() * 40 + 256);
  out += "ply\nformat ascii 1.0\ncomment scene_id " + scene_id + "\nelement vertex " + std::to_string(points.size()) +
         "\nproperty double x\nproperty double y\nproperty double z\nproperty int instance_id\nend_header\n";
  char buf[128];
  for (std::size_t k = 0; k < points.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.6f %.6f %.6f %u\n", quantize_coordinate(points[k].x()), quantize_coordinate(points[k].y()),
                  quantize_coordinate(points[k].z()), static_cast<unsigned>(mask[k]));
    out += buf;
  }
  return out;
}

inline PointCloudFile parse_point_cloud(std::istream& in) {
  PointCloudFile file;
  std::string line;
  std::size_t count = 0;
  bool have_count = false;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) throw ParseError("point cloud: missing 'ply' magic");
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "comment") {
      std::string key;
      ls >> key;
      if (key == "scene_id") {
        std::getline(ls >> std::ws, file.scene_id);
      }
    } else if (word == "element") {
      std::string name;
      ls >> name >> count;
      if (name != "vertex" || !ls) throw ParseError("point cloud: unsupported element '" + name + "'");
      have_count = true;
    } else if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") throw ParseError("point cloud: only ascii format is supported");
    }
  }
  if (!have_count) throw ParseError("point cloud: missing vertex count");
  file.points.reserve(count);
  file.mask.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    if (!std::getline(in, line)) throw ParseError("point cloud: expected " + std::to_string(count) + " rows, got " + std::to_string(k));
    const char* s = line.c_str();
    char* end = nullptr;
    double xyz[3];
    for (double& v : xyz) {
      v = std::strtod(s, &end);
      if (end == s) throw ParseError("point cloud: bad coordinate on row " + std::to_string(k));
      s = end;
    }
    const long id = std::strtol(s, &end, 10);
    if (end == s || id < 0) throw ParseError("point cloud: bad instance id on row " + std::to_string(k));
    file.points.emplace_back(xyz[0], xyz[1], xyz[2]);
    file.mask.push_back(static_cast<NodeId>(id));
  }
  return file;
}

inline PointCloudFile load_point_cloud(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open point cloud " + path);
  return parse_point_cloud(in);
}

inline void save_scene_points(const Scene& scene, const std::string& path) {
  write_text_file(path, format_point_cloud(scene.scene_id(), scene.points(), scene.mask()));
}

/// Scene from a point cloud plus the instance metadata of its graph file.
inline Scene scene_from_files(const PointCloudFile& cloud, const SceneGraph& graph) {
  return Scene(cloud.scene_id.empty() ? graph.scene_id() : cloud.scene_id, cloud.points, cloud.mask, graph.nodes());
}

inline nlohmann::json camera_to_json(const CameraPose& cam) {
  nlohmann::json extrinsic = nlohmann::json::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) extrinsic.push_back(cam.extrinsic()(r, c));
  const auto& in = cam.intrinsics();
  return {{"extrinsic", extrinsic}, {"fx", in.fx}, {"fy", in.fy}, {"cx", in.cx}, {"cy", in.cy}, {"width", in.width}, {"height", in.height}};
}

inline CameraPose camera_from_json(const nlohmann::json& j) {
  try {
    const auto e = j.at("extrinsic").get<std::vector<double>>();
    if (e.size() != 16) throw ParseError("camera: extrinsic must have 16 numbers");
    Eigen::Matrix4d m;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = e[static_cast<std::size_t>(r * 4 + c)];
    Intrinsics in;
    in.fx = j.at("fx").get<double>();
    in.fy = j.at("fy").get<double>();
    in.cx = j.at("cx").get<double>();
    in.cy = j.at("cy").get<double>();
    in.width = j.at("width").get<int>();
    in.height = j.at("height").get<int>();
    return CameraPose(m, in);
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("camera: ") + ex.what());
  }
}

inline void save_camera(const CameraPose& cam, const std::string& path) { write_text_file(path, camera_to_json(cam).dump(2) + "\n"); }

inline CameraPose load_camera(const std::string& path) {
  try {
    return camera_from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError("camera file " + path + ": " + ex.what());
  }
}

}  // namespace sgg
