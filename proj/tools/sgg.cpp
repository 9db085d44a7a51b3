// Command-line entry point. Exit codes: 0 success, 1 other failure,
// 2 configuration error, 3 data error.

#include <cstdlib>
#include <iostream>
#include <string>

#include <nlohmann/json.hpp>

#include <CLI11.hpp>
#include "sgg/sgg.hpp"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-")
    std::cout << text;
  else
    sgg::write_text_file(out, text);
}

sgg::SceneGraph graph_or_empty(const std::string& graph_path, const sgg::PointCloudFile& cloud) {
  if (!graph_path.empty()) return sgg::load_graph(graph_path);
  return sgg::SceneGraph(cloud.scene_id);
}

int run_gen_synth(std::uint64_t seed, std::size_t count, std::size_t rescans, std::size_t max_classes, const std::string& out) {
  sgg::DatasetSpec spec;
  spec.seed = seed;
  spec.count = count;
  spec.rescans_per_scene = rescans;
  spec.scene.max_classes = max_classes;
  sgg::write_dataset(out, spec);
  std::cout << "wrote " << count << " scenes to " << out << "\n";
  return 0;
}

/// Train config file: {"model": {...}, "train": {...}, "validation_count": n}.
/// The last validation_count scenes are held out for per-epoch recall.
int run_train(const std::string& data, const std::string& config_path, const std::string& out) {
  nlohmann::json cfg = nlohmann::json::object();
  if (!config_path.empty()) {
    try {
      cfg = nlohmann::json::parse(sgg::read_text_file(config_path));
    } catch (const nlohmann::json::exception& ex) {
      throw sgg::ConfigError("config " + config_path + ": " + ex.what());
    } catch (const sgg::DataError& ex) {
      throw sgg::ConfigError(ex.what());
    }
  }
  if (!cfg.is_object()) throw sgg::ConfigError("config: expected a JSON object");
  for (const auto& [key, value] : cfg.items())
    if (key != "model" && key != "train" && key != "validation_count") throw sgg::ConfigError("config." + key + ": unknown field");
  sgg::sgpn::ModelConfig model_cfg;
  sgg::sgpn::TrainConfig train_cfg;
  std::size_t validation_count = 0;
  if (cfg.contains("model")) model_cfg = sgg::sgpn::model_config_from_json(cfg.at("model"));
  if (cfg.contains("train")) train_cfg = sgg::sgpn::train_config_from_json(cfg.at("train"));
  sgg::sgpn::detail::read_field(cfg, "validation_count", validation_count, "config");

  const auto records = sgg::load_dataset(data);
  if (validation_count >= records.size()) throw sgg::ConfigError("config.validation_count: leaves no training scenes");
  std::vector<sgg::sgpn::Sample> train_set, validation;
  for (std::size_t i = 0; i < records.size(); ++i)
    (i + validation_count < records.size() ? train_set : validation).push_back({records[i].scene, records[i].graph});
  const auto [classes, predicates] = sgg::sgpn::vocabulary_of(train_set);
  if (model_cfg.classes.empty()) model_cfg.classes = classes;
  if (model_cfg.predicates.empty()) model_cfg.predicates = predicates;
  auto result = sgg::sgpn::train(train_set, validation, model_cfg, train_cfg, [](const sgg::sgpn::EpochLog& e) {
    std::cout << sgg::sgpn::to_json(e).dump() << "\n" << std::flush;
  });
  sgg::sgpn::save_checkpoint(result.model, out, train_cfg);
  std::cout << "saved checkpoint " << out << "\n";
  return 0;
}

int run_predict(const std::string& ckpt, const std::string& scene_path, const std::string& graph_path, double threshold, const std::string& out) {
  auto model = sgg::sgpn::load_checkpoint<float>(ckpt);
  const auto cloud = sgg::load_point_cloud(scene_path);
  const sgg::Scene scene = graph_path.empty() ? sgg::Scene::class_agnostic(cloud.scene_id, cloud.points, cloud.mask)
                                              : sgg::scene_from_files(cloud, graph_or_empty(graph_path, cloud));
  const auto scores = sgg::sgpn::forward(model, scene);
  emit(sgg::serialize_graph(sgg::scores_to_graph(scores, scene.scene_id(), threshold)), out);
  return 0;
}

int run_retrieve(const std::string& query, const std::vector<std::string>& pool, const std::string& coeff, const std::string& mode, std::size_t topk) {
  const auto c = sgg::coefficient_from_string(coeff);
  const auto m = sgg::retrieval_mode_from_string(mode);
  sgg::ScanIndex index;
  for (const auto& p : pool) index.add(sgg::load_graph(p));
  const auto ranked = sgg::retrieve(sgg::to_multisets(sgg::load_graph(query)), index, c, m);
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < ranked.size() && i < topk; ++i) out.push_back({{"scene_id", ranked[i].scene_id}, {"score", ranked[i].score}});
  std::cout << out.dump(2) << "\n";
  return 0;
}

int run_diff(const std::string& a, const std::string& b, const std::string& out) {
  const auto residues = sgg::detect_changes(sgg::to_multisets(sgg::load_graph(a)), sgg::to_multisets(sgg::load_graph(b)));
  emit(sgg::to_json(residues).dump(2) + "\n", out);
  return 0;
}

int run_eval(const std::string& config, const std::string& out) {
  const auto cfg = sgg::load_experiment_config(config);
  const auto report = sgg::run_experiment(cfg);
  const std::string text_path = sgg::write_report(report, out);
  std::cout << sgg::render_text(report) << "report: " << out << " and " << text_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene graph prediction, retrieval and evaluation"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::size_t count = 10, rescans = 1, max_classes = 160;
  std::string out;
  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic dataset directory");
  gen->add_option("--seed", seed, "Dataset seed");
  gen->add_option("--count", count, "Number of reference scenes");
  gen->add_option("--rescans", rescans, "Rescans per reference scene");
  gen->add_option("--max-classes", max_classes, "Class vocabulary cap");
  gen->add_option("--out", out, "Output directory")->required();

  std::string data, config;
  auto* train = app.add_subcommand("train", "Train a scene graph prediction network");
  train->add_option("--data", data, "Dataset directory")->required();
  train->add_option("--config", config, "JSON with model/train settings");
  train->add_option("--out", out, "Checkpoint path")->required();

  std::string ckpt, scene, graph;
  double threshold = 0.5;
  auto* predict = app.add_subcommand("predict", "Predict the scene graph of a point cloud");
  predict->add_option("--ckpt", ckpt, "Checkpoint")->required();
  predict->add_option("--scene", scene, "Point-cloud file")->required();
  predict->add_option("--graph", graph, "Graph file supplying instance metadata (optional)");
  predict->add_option("--threshold", threshold, "Predicate probability threshold");
  predict->add_option("--out", out, "Output graph.json (default stdout)");

  std::string query, coeff = "simpson", mode = "full";
  std::vector<std::string> pool;
  std::size_t topk = 5;
  auto* retrieve = app.add_subcommand("retrieve", "Rank pool graphs by similarity to a query graph");
  retrieve->add_option("--query", query, "Query graph.json")->required();
  retrieve->add_option("--pool", pool, "Pool graph.json files")->required();
  retrieve->add_option("--coeff", coeff, "jaccard | simpson");
  retrieve->add_option("--mode", mode, "full | nodes-only");
  retrieve->add_option("--topk", topk, "Number of results");

  std::string a, b;
  auto* diff = app.add_subcommand("diff", "Multiset change residues between two graphs");
  diff->add_option("--a", a, "Earlier graph.json")->required();
  diff->add_option("--b", b, "Later graph.json")->required();
  diff->add_option("--out", out, "Output JSON (default stdout)");

  auto* eval = app.add_subcommand("eval", "Run an experiment and write JSON and text reports");
  eval->add_option("--config", config, "Experiment config JSON")->required();
  eval->add_option("--out", out, "Report JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) return run_gen_synth(seed, count, rescans, max_classes, out);
    if (*train) return run_train(data, config, out);
    if (*predict) return run_predict(ckpt, scene, graph, threshold, out);
    if (*retrieve) return run_retrieve(query, pool, coeff, mode, topk);
    if (*diff) return run_diff(a, b, out);
    if (*eval) return run_eval(config, out);
  } catch (const sgg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const sgg::InfeasibleSpec& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const sgg::Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
