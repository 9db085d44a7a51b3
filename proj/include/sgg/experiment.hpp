#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgg/dataset.hpp"
#include "sgg/error.hpp"
#include "sgg/graph.hpp"
#include "sgg/metrics.hpp"
#include "sgg/relations.hpp"
#include "sgg/retrieval.hpp"
#include "sgg/rng.hpp"
#include "sgg/sgpn.hpp"

#ifndef SGG_GIT_REVISION
#define SGG_GIT_REVISION "unknown"
#endif

namespace sgg {

enum class GraphSource : std::uint8_t { ground_truth, predicted };

/// Experiment configuration. JSON keys:
///   seed            integer, default 0
///   data_dir        dataset directory written by gen-synth (required)
///   test_count      scenes at the end of the index order held out for testing (default: all)
///   graphs          "ground_truth" | "predicted"
///   checkpoint      model file for "predicted"; when absent a model is trained on the train split
///   model, train    SGPN and optimizer settings (see ModelConfig / TrainConfig)
///   thresholds      relation extraction thresholds used for 2D rendering
///   relationship_k, object_k, predicate_k, retrieval_k   lists of cutoffs
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string data_dir;
  std::optional<std::size_t> test_count;
  GraphSource graphs = GraphSource::ground_truth;
  std::string checkpoint;
  sgpn::ModelConfig model;
  sgpn::TrainConfig train;
  ExtractionThresholds thresholds;
  std::vector<std::size_t> relationship_k{50, 100};
  std::vector<std::size_t> object_k{5, 10};
  std::vector<std::size_t> predicate_k{3, 5};
  std::vector<std::size_t> retrieval_k{1, 3, 5};
};

inline nlohmann::json to_json(const ExtractionThresholds& t) {
  return {{"support_radius", t.support_radius}, {"left_right", t.left_right}, {"front_behind", t.front_behind},
          {"close_by", t.close_by},             {"size_ratio", t.size_ratio}, {"min_pixels", t.min_pixels},
          {"lying_aspect", t.lying_aspect},     {"lying_max_height", t.lying_max_height}};
}

inline ExtractionThresholds thresholds_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("thresholds: expected an object");
  ExtractionThresholds t;
  sgpn::detail::read_field(j, "support_radius", t.support_radius, "thresholds");
  sgpn::detail::read_field(j, "left_right", t.left_right, "thresholds");
  sgpn::detail::read_field(j, "front_behind", t.front_behind, "thresholds");
  sgpn::detail::read_field(j, "close_by", t.close_by, "thresholds");
  sgpn::detail::read_field(j, "size_ratio", t.size_ratio, "thresholds");
  sgpn::detail::read_field(j, "min_pixels", t.min_pixels, "thresholds");
  sgpn::detail::read_field(j, "lying_aspect", t.lying_aspect, "thresholds");
  sgpn::detail::read_field(j, "lying_max_height", t.lying_max_height, "thresholds");
  if (!(t.support_radius > 0)) throw ConfigError("thresholds.support_radius: must be > 0");
  if (t.left_right < 0 || t.front_behind < 0 || t.close_by < 0) throw ConfigError("thresholds: distances must be >= 0");
  if (!(t.size_ratio >= 1)) throw ConfigError("thresholds.size_ratio: must be >= 1");
  return t;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j = {{"seed", c.seed},
                      {"data_dir", c.data_dir},
                      {"graphs", c.graphs == GraphSource::ground_truth ? "ground_truth" : "predicted"},
                      {"thresholds", to_json(c.thresholds)},
                      {"relationship_k", c.relationship_k},
                      {"object_k", c.object_k},
                      {"predicate_k", c.predicate_k},
                      {"retrieval_k", c.retrieval_k}};
  j["test_count"] = c.test_count ? nlohmann::json(*c.test_count) : nlohmann::json(nullptr);
  if (c.graphs == GraphSource::predicted) {
    j["checkpoint"] = c.checkpoint;
    j["model"] = sgpn::to_json(c.model);
    j["train"] = sgpn::to_json(c.train);
  }
  return j;
}

/// Parse and validate; every problem is reported as ConfigError naming the field.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  static const std::set<std::string> known{"seed",      "data_dir", "test_count", "graphs",     "checkpoint",     "model",      "train",
                                           "thresholds", "relationship_k", "object_k", "predicate_k", "retrieval_k"};
  for (const auto& [key, value] : j.items())
    if (known.count(key) == 0) throw ConfigError("config." + key + ": unknown field");
  ExperimentConfig c;
  sgpn::detail::read_field(j, "seed", c.seed, "config");
  if (!j.contains("data_dir")) throw ConfigError("config.data_dir: required");
  sgpn::detail::read_field(j, "data_dir", c.data_dir, "config");
  if (!std::filesystem::is_directory(c.data_dir)) throw ConfigError("config.data_dir: directory '" + c.data_dir + "' does not exist");
  if (j.contains("test_count") && !j.at("test_count").is_null()) {
    std::size_t n = 0;
    sgpn::detail::read_field(j, "test_count", n, "config");
    c.test_count = n;
  }
  std::string graphs = "ground_truth";
  sgpn::detail::read_field(j, "graphs", graphs, "config");
  if (graphs == "ground_truth")
    c.graphs = GraphSource::ground_truth;
  else if (graphs == "predicted")
    c.graphs = GraphSource::predicted;
  else
    throw ConfigError("config.graphs: expected 'ground_truth' or 'predicted'");
  sgpn::detail::read_field(j, "checkpoint", c.checkpoint, "config");
  if (!c.checkpoint.empty() && !std::filesystem::exists(c.checkpoint)) throw ConfigError("config.checkpoint: file '" + c.checkpoint + "' does not exist");
  if (j.contains("model")) c.model = sgpn::model_config_from_json(j.at("model"));
  if (j.contains("train")) c.train = sgpn::train_config_from_json(j.at("train"));
  if (j.contains("thresholds")) c.thresholds = thresholds_from_json(j.at("thresholds"));
  for (const char* key : {"relationship_k", "object_k", "predicate_k", "retrieval_k"}) {
    std::vector<std::size_t>* dst = std::string(key) == "relationship_k" ? &c.relationship_k
                                    : std::string(key) == "object_k"     ? &c.object_k
                                    : std::string(key) == "predicate_k"  ? &c.predicate_k
                                                                         : &c.retrieval_k;
    sgpn::detail::read_field(j, key, *dst, "config");
    if (dst->empty()) throw ConfigError(std::string("config.") + key + ": needs at least one cutoff");
  }
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  try {
    return experiment_config_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError("config " + path + ": " + ex.what());
  }
}

/// A camera inside the rescan room looking at one of its objects, chosen from
/// `rng`; falls back to `fallback` when no tried view sees two instances.
inline CameraPose query_view(const Scene& scene, const SceneGraph& graph, const CameraPose& fallback, const ExtractionThresholds& t, Rng& rng) {
  const auto floor = scene.find_by_label(vocab::kFloor);
  std::vector<NodeId> targets;
  for (const auto& [id, node] : scene.instances())
    if (node.label() != vocab::kFloor && node.label() != vocab::kWall && !scene.indices(id).empty()) targets.push_back(id);
  if (!floor || targets.empty()) return fallback;
  const BBox3& room = scene.bbox(*floor);
  for (int attempt = 0; attempt < 20; ++attempt) {
    const Vec3 eye(rng.uniform(room.min.x() + 0.3, room.max.x() - 0.3), rng.uniform(room.min.y() + 0.3, room.max.y() - 0.3), 1.5);
    const Vec3 target = scene.bbox(targets[rng.index(targets.size())]).center();
    Vec3 flat = target - eye;
    flat.z() = 0;
    if (flat.norm() < 0.5) continue;
    const CameraPose view = CameraPose::look_at(eye, target, fallback.intrinsics());
    if (render_graph_2d(graph, scene, view, t).nodes().size() >= 2) return view;
  }
  return fallback;
}

/// Result of one experiment run. Prediction metrics are absent for
/// ground-truth graphs; a recall is null when its denominator is empty.
struct EvalReport {
  nlohmann::json config;
  std::string revision = SGG_GIT_REVISION;
  std::uint64_t seed = 0;
  std::string graphs;
  std::size_t train_scenes = 0;
  std::size_t test_scenes = 0;
  std::size_t queries = 0;
  // "relationship" | "object" | "predicate" -> k -> recall
  std::map<std::string, std::map<std::size_t, std::optional<double>>> prediction;
  // "3d-3d" | "2d-3d" -> "tau_jaccard" | "tau_simpson" | "f_jaccard" | "f_simpson" -> k -> top-k
  std::map<std::string, std::map<std::string, std::map<std::size_t, double>>> retrieval;
  std::vector<sgpn::EpochLog> training;
};

inline nlohmann::json to_json(const EvalReport& r) {
  using nlohmann::json;
  json pred = json::object();
  for (const auto& [metric, by_k] : r.prediction) {
    json m = json::object();
    for (const auto& [k, v] : by_k) m["R@" + std::to_string(k)] = v ? json(*v) : json(nullptr);
    pred[metric] = m;
  }
  json ret = json::object();
  for (const auto& [task, rows] : r.retrieval) {
    json t = json::object();
    for (const auto& [row, by_k] : rows) {
      json m = json::object();
      for (const auto& [k, v] : by_k) m["top" + std::to_string(k)] = v;
      t[row] = m;
    }
    ret[task] = t;
  }
  json training = json::array();
  for (const auto& e : r.training) training.push_back(sgpn::to_json(e));
  return {{"provenance", {{"revision", r.revision}, {"seed", r.seed}}},
          {"config", r.config},
          {"graphs", r.graphs},
          {"counts", {{"train_scenes", r.train_scenes}, {"test_scenes", r.test_scenes}, {"queries", r.queries}}},
          {"prediction", r.prediction.empty() ? json(nullptr) : pred},
          {"retrieval", ret},
          {"training", training}};
}

/// Plain-text tables: prediction recalls, then one retrieval table per task.
inline std::string render_text(const EvalReport& r) {
  std::ostringstream out;
  char buf[64];
  auto num = [&](std::optional<double> v) {
    if (!v) return std::string("    -  ");
    std::snprintf(buf, sizeof(buf), "%7.3f", *v);
    return std::string(buf);
  };
  out << "graphs: " << r.graphs << "   seed: " << r.seed << "   revision: " << r.revision << "\n";
  out << "scenes: train " << r.train_scenes << ", test " << r.test_scenes << ", retrieval queries " << r.queries << "\n";
  if (!r.prediction.empty()) {
    out << "\nprediction\n";
    for (const auto& [metric, by_k] : r.prediction) {
      std::snprintf(buf, sizeof(buf), "  %-14s", metric.c_str());
      out << buf;
      for (const auto& [k, v] : by_k) out << "  R@" << k << num(v);
      out << "\n";
    }
  }
  for (const char* task : {"3d-3d", "2d-3d"}) {
    const auto found = r.retrieval.find(task);
    if (found == r.retrieval.end()) continue;
    const auto& rows = found->second;
    out << "\nretrieval " << task << "\n";
    for (const auto& [row, by_k] : rows) {
      std::snprintf(buf, sizeof(buf), "  %-14s", row.c_str());
      out << buf;
      for (const auto& [k, v] : by_k) out << "  top" << k << num(v);
      out << "\n";
    }
  }
  return out.str();
}

namespace detail {

inline std::vector<sgpn::Sample> samples_of(const std::vector<SceneRecord>& records) {
  std::vector<sgpn::Sample> out;
  for (const auto& r : records) out.push_back({r.scene, r.graph});
  return out;
}

}  // namespace detail

/// Load data, obtain graphs (ground truth or predicted), score prediction
/// metrics on the test split, and run 3D-3D and 2D-3D retrieval of every test
/// rescan against the test reference scenes.
inline EvalReport run_experiment(const ExperimentConfig& cfg) {
  const auto records = load_dataset(cfg.data_dir);
  const std::size_t test_n = cfg.test_count ? *cfg.test_count : records.size();
  if (test_n == 0 || test_n > records.size())
    throw ConfigError("config.test_count: must be in [1, " + std::to_string(records.size()) + "]");
  const std::vector<SceneRecord> train_split(records.begin(), records.end() - static_cast<std::ptrdiff_t>(test_n));
  const std::vector<SceneRecord> test_split(records.end() - static_cast<std::ptrdiff_t>(test_n), records.end());

  EvalReport report;
  report.config = to_json(cfg);
  report.seed = cfg.seed;
  report.graphs = cfg.graphs == GraphSource::ground_truth ? "ground_truth" : "predicted";
  report.train_scenes = train_split.size();
  report.test_scenes = test_split.size();

  // graphs used for retrieval, keyed by scene id
  std::map<std::string, SceneGraph> graphs;
  if (cfg.graphs == GraphSource::ground_truth) {
    for (const auto& r : test_split) {
      graphs[r.name] = r.graph;
      for (const auto& q : r.rescans) graphs[q.name] = q.graph;
    }
  } else {
    std::optional<sgpn::Model<float>> model;
    if (!cfg.checkpoint.empty()) {
      model = sgpn::load_checkpoint<float>(cfg.checkpoint);
    } else {
      if (train_split.empty()) throw ConfigError("config.test_count: no scenes left for training and no checkpoint given");
      const auto samples = detail::samples_of(train_split);
      sgpn::ModelConfig mc = cfg.model;
      const auto [classes, predicates] = sgpn::vocabulary_of(samples);
      if (mc.classes.empty()) mc.classes = classes;
      if (mc.predicates.empty()) mc.predicates = predicates;
      auto trained = sgpn::train(samples, {}, mc, cfg.train);
      report.training = trained.log;
      model = std::move(trained.model);
    }
    std::vector<RecallCount> rel(cfg.relationship_k.size()), obj(cfg.object_k.size()), pred(cfg.predicate_k.size());
    for (const auto& r : test_split) {
      const auto scores = sgpn::forward(*model, r.scene);
      for (std::size_t i = 0; i < rel.size(); ++i) rel[i] += triplet_hits(scores, r.graph, cfg.relationship_k[i]);
      for (std::size_t i = 0; i < obj.size(); ++i) obj[i] += object_hits(scores, r.graph, cfg.object_k[i]);
      for (std::size_t i = 0; i < pred.size(); ++i) pred[i] += predicate_hits(scores, r.graph, cfg.predicate_k[i]);
      graphs[r.name] = scores_to_graph(scores, r.name);
      for (const auto& q : r.rescans) graphs[q.name] = scores_to_graph(sgpn::forward(*model, q.scene), q.name);
    }
    for (std::size_t i = 0; i < rel.size(); ++i) report.prediction["relationship"][cfg.relationship_k[i]] = rel[i].recall();
    for (std::size_t i = 0; i < obj.size(); ++i) report.prediction["object"][cfg.object_k[i]] = obj[i].recall();
    for (std::size_t i = 0; i < pred.size(); ++i) report.prediction["predicate"][cfg.predicate_k[i]] = pred[i].recall();
  }

  ScanIndex index;
  for (const auto& r : test_split) index.add(r.name, to_multisets(graphs.at(r.name)));
  std::map<std::string, AugmentedGraph> queries_3d, queries_2d;
  std::map<std::string, std::string> truth;
  for (std::size_t si = 0; si < test_split.size(); ++si) {
    const auto& r = test_split[si];
    for (std::size_t qi = 0; qi < r.rescans.size(); ++qi) {
      const auto& q = r.rescans[qi];
      const SceneGraph& g = graphs.at(q.name);
      queries_3d[q.name] = to_multisets(g);
      Rng rng(Rng::mix(cfg.seed, si * 64 + qi));
      const CameraPose view = query_view(q.scene, g, r.reference, cfg.thresholds, rng);
      queries_2d[q.name] = to_multisets(render_graph_2d(g, q.scene, view, cfg.thresholds));
      truth[q.name] = r.name;
    }
  }
  report.queries = queries_3d.size();
  const std::pair<const char*, std::map<std::string, AugmentedGraph>*> tasks[] = {{"3d-3d", &queries_3d}, {"2d-3d", &queries_2d}};
  for (const auto& [task, qs] : tasks) {
    if (qs->empty()) continue;
    for (const auto mode : {RetrievalMode::nodes_only, RetrievalMode::full})
      for (const auto coeff : {Coefficient::jaccard, Coefficient::simpson}) {
        std::map<std::string, std::vector<RankedScene>> ranked;
        for (const auto& [name, query] : *qs) ranked[name] = retrieve(query, index, coeff, mode);
        const std::string row = std::string(mode == RetrievalMode::full ? "f_" : "tau_") + to_string(coeff);
        for (std::size_t k : cfg.retrieval_k) report.retrieval[task][row][k] = retrieval_topk(ranked, truth, k);
      }
  }
  return report;
}

/// JSON report to `json_path` and its text rendering next to it (.txt).
inline std::string write_report(const EvalReport& report, const std::string& json_path) {
  write_text_file(json_path, to_json(report).dump(2) + "\n");
  std::filesystem::path text_path(json_path);
  text_path.replace_extension(".txt");
  write_text_file(text_path.string(), render_text(report));
  return text_path.string();
}

}  // namespace sgg
