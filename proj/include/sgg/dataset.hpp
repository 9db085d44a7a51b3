#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgg/error.hpp"
#include "sgg/graph_io.hpp"
#include "sgg/rng.hpp"
#include "sgg/scene_io.hpp"
#include "sgg/synth.hpp"

namespace sgg {

/// Options of a generated dataset directory.
struct DatasetSpec {
  std::uint64_t seed = 0;
  std::size_t count = 10;
  std::size_t rescans_per_scene = 1;
  std::size_t min_ops = 2;
  std::size_t max_ops = 4;
  synth::SceneSpec scene;  // seed is overridden per scene
};

struct RescanRecord {
  std::string name;  // "sceneK.rescanM", also the scene id
  Scene scene;
  SceneGraph graph;
  nlohmann::json log;  // perturbation log as written, empty when absent
};

struct SceneRecord {
  std::string name;  // "sceneK", also the scene id
  Scene scene;
  SceneGraph graph;
  CameraPose reference;
  std::vector<RescanRecord> rescans;
};

inline std::string scene_name(std::size_t k) { return "scene" + std::to_string(k); }

/// One generated scene with its rescans, keyed to the dataset seed.
struct GeneratedRecord {
  synth::SyntheticScene base;
  std::vector<synth::RescanResult> rescans;
};

inline GeneratedRecord generate_record(const DatasetSpec& spec, std::size_t k) {
  synth::SceneSpec s = spec.scene;
  s.seed = Rng::mix(spec.seed, k);
  GeneratedRecord out;
  out.base = synth::generate_scene(s);
  const std::string name = scene_name(k);
  out.base.scene = Scene(name, out.base.scene.points(), out.base.scene.mask(), out.base.scene.instances());
  out.base.graph.set_scene_id(name);
  for (std::size_t m = 0; m < spec.rescans_per_scene; ++m) {
    Rng rng(Rng::mix(s.seed, 1000 + m));
    synth::RescanSpec rs;
    rs.seed = rng.next();
    rs.op_count = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(spec.min_ops), static_cast<std::int64_t>(spec.max_ops)));
    auto r = synth::generate_rescan(out.base, rs, s);
    const std::string rname = name + ".rescan" + std::to_string(m);
    r.rescan.scene = Scene(rname, r.rescan.scene.points(), r.rescan.scene.mask(), r.rescan.scene.instances());
    r.rescan.graph.set_scene_id(rname);
    out.rescans.push_back(std::move(r));
  }
  return out;
}

/// Write `count` scenes as sceneK.ply / sceneK.graph.json / sceneK.camera.json
/// plus sceneK.rescanM.{ply,graph.json,log.json}.
inline void write_dataset(const std::string& dir, const DatasetSpec& spec) {
  if (spec.min_ops > spec.max_ops) throw ConfigError("rescan op range: min exceeds max");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir + ": " + ec.message());
  for (std::size_t k = 0; k < spec.count; ++k) {
    const auto rec = generate_record(spec, k);
    const std::string base = (std::filesystem::path(dir) / scene_name(k)).string();
    save_scene_points(rec.base.scene, base + ".ply");
    save_graph(rec.base.graph, base + ".graph.json");
    save_camera(rec.base.reference, base + ".camera.json");
    for (std::size_t m = 0; m < rec.rescans.size(); ++m) {
      const std::string rb = base + ".rescan" + std::to_string(m);
      save_scene_points(rec.rescans[m].rescan.scene, rb + ".ply");
      save_graph(rec.rescans[m].rescan.graph, rb + ".graph.json");
      write_text_file(rb + ".log.json", synth::log_to_json(rec.rescans[m].log).dump(2) + "\n");
    }
  }
}

namespace detail {

inline Scene load_scene_pair(const std::string& ply, const SceneGraph& graph) {
  return scene_from_files(load_point_cloud(ply), graph);
}

}  // namespace detail

/// Load every sceneK (K = 0, 1, ...) of a dataset directory in index order.
inline std::vector<SceneRecord> load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("dataset directory " + dir + " does not exist");
  std::map<std::size_t, std::string> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string f = entry.path().filename().string();
    const std::string suffix = ".graph.json";
    if (f.rfind("scene", 0) != 0 || f.size() <= suffix.size() || f.compare(f.size() - suffix.size(), suffix.size(), suffix) != 0) continue;
    const std::string stem = f.substr(0, f.size() - suffix.size());
    if (stem.find('.') != std::string::npos) continue;  // rescans
    const std::string digits = stem.substr(5);
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) continue;
    found[std::stoul(digits)] = stem;
  }
  if (found.empty()) throw DataError("dataset directory " + dir + " contains no sceneK.graph.json files");
  std::vector<SceneRecord> out;
  for (const auto& [k, stem] : found) {
    const std::string base = (fs::path(dir) / stem).string();
    SceneRecord rec;
    rec.name = stem;
    rec.graph = load_graph(base + ".graph.json");
    rec.scene = detail::load_scene_pair(base + ".ply", rec.graph);
    rec.reference = load_camera(base + ".camera.json");
    for (std::size_t m = 0;; ++m) {
      const std::string rb = base + ".rescan" + std::to_string(m);
      if (!fs::exists(rb + ".graph.json")) break;
      RescanRecord r;
      r.name = stem + ".rescan" + std::to_string(m);
      r.graph = load_graph(rb + ".graph.json");
      r.scene = detail::load_scene_pair(rb + ".ply", r.graph);
      if (fs::exists(rb + ".log.json")) {
        try {
          r.log = nlohmann::json::parse(read_text_file(rb + ".log.json"));
        } catch (const nlohmann::json::exception& ex) {
          throw ParseError(rb + ".log.json: " + ex.what());
        }
      }
      rec.rescans.push_back(std::move(r));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace sgg
