#include <gtest/gtest.h>

#include <filesystem>

#include "sgg/experiment.hpp"

using namespace sgg;

namespace {

std::string make_dataset(const std::string& name, std::size_t count, std::size_t min_ops, std::size_t max_ops) {
  const auto dir = (std::filesystem::temp_directory_path() / name).string();
  std::filesystem::remove_all(dir);
  DatasetSpec spec;
  spec.seed = 17;
  spec.count = count;
  spec.rescans_per_scene = 1;
  spec.min_ops = min_ops;
  spec.max_ops = max_ops;
  write_dataset(dir, spec);
  return dir;
}

}  // namespace

TEST(ExperimentConfig, RequiresExistingDataDir) {
  EXPECT_THROW(experiment_config_from_json(nlohmann::json::object()), ConfigError);
  EXPECT_THROW(experiment_config_from_json(nlohmann::json{{"data_dir", "/nonexistent/data"}}), ConfigError);
  EXPECT_THROW(load_experiment_config("/nonexistent/config.json"), ConfigError);
}

TEST(ExperimentConfig, RejectsUnknownAndInvalidFields) {
  const auto dir = std::filesystem::temp_directory_path().string();
  EXPECT_THROW(experiment_config_from_json(nlohmann::json{{"data_dir", dir}, {"colour", "red"}}), ConfigError);
  EXPECT_THROW(experiment_config_from_json(nlohmann::json{{"data_dir", dir}, {"graphs", "imagined"}}), ConfigError);
  EXPECT_THROW(experiment_config_from_json(nlohmann::json{{"data_dir", dir}, {"retrieval_k", nlohmann::json::array()}}), ConfigError);
  EXPECT_THROW(experiment_config_from_json(nlohmann::json{{"data_dir", dir}, {"seed", "seven"}}), ConfigError);
  EXPECT_THROW(experiment_config_from_json(nlohmann::json{{"data_dir", dir}, {"thresholds", {{"size_ratio", 0.5}}}}), ConfigError);
  EXPECT_THROW(experiment_config_from_json(nlohmann::json{{"data_dir", dir}, {"checkpoint", "/nonexistent/ckpt.json"}}), ConfigError);
}

TEST(ExperimentConfig, DefaultsAndRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path().string();
  const auto c = experiment_config_from_json(nlohmann::json{{"data_dir", dir}, {"test_count", 4}, {"seed", 5}});
  EXPECT_EQ(c.test_count, 4u);
  EXPECT_EQ(c.graphs, GraphSource::ground_truth);
  EXPECT_EQ(c.retrieval_k, (std::vector<std::size_t>{1, 3, 5}));
  EXPECT_EQ(to_json(experiment_config_from_json(to_json(c))), to_json(c));
}

TEST(RunExperiment, UnchangedRescansRetrieveTheirReferenceIn3d) {
  ExperimentConfig cfg;
  cfg.data_dir = make_dataset("sgg_exp_identity", 6, 0, 0);
  const auto report = run_experiment(cfg);
  EXPECT_EQ(report.test_scenes, 6u);
  EXPECT_EQ(report.queries, 6u);
  EXPECT_TRUE(report.prediction.empty());
  EXPECT_EQ(report.retrieval.at("3d-3d").at("f_jaccard").at(1), 1.0);
  EXPECT_EQ(report.retrieval.at("3d-3d").at("f_simpson").at(1), 1.0);
  EXPECT_EQ(report.retrieval.at("2d-3d").size(), 4u);
  const auto j = to_json(report);
  EXPECT_TRUE(j.at("prediction").is_null());
  EXPECT_EQ(j.at("counts").at("queries"), 6);
  EXPECT_TRUE(j.at("retrieval").at("3d-3d").at("tau_jaccard").contains("top5"));
}

TEST(RunExperiment, ReportIsDeterministic) {
  ExperimentConfig cfg;
  cfg.seed = 3;
  cfg.data_dir = make_dataset("sgg_exp_determinism", 5, 2, 4);
  EXPECT_EQ(to_json(run_experiment(cfg)).dump(), to_json(run_experiment(cfg)).dump());
}

TEST(RunExperiment, TestCountOutOfRangeThrows) {
  ExperimentConfig cfg;
  cfg.data_dir = make_dataset("sgg_exp_range", 2, 1, 1);
  cfg.test_count = 3;
  EXPECT_THROW(run_experiment(cfg), ConfigError);
  cfg.test_count = 2;
  cfg.graphs = GraphSource::predicted;
  EXPECT_THROW(run_experiment(cfg), ConfigError);
}

TEST(RunExperiment, PredictedGraphsFillPredictionTable) {
  ExperimentConfig cfg;
  cfg.data_dir = make_dataset("sgg_exp_predicted", 4, 1, 2);
  cfg.test_count = 2;
  cfg.graphs = GraphSource::predicted;
  cfg.model.point_widths = {16};
  cfg.model.feature_width = 16;
  cfg.model.gcn_layers = 1;
  cfg.model.head_hidden = 16;
  cfg.model.points_per_set = 32;
  cfg.train.epochs = 1;
  const auto report = run_experiment(cfg);
  EXPECT_EQ(report.train_scenes, 2u);
  EXPECT_EQ(report.training.size(), 1u);
  for (const char* metric : {"relationship", "object", "predicate"}) {
    ASSERT_TRUE(report.prediction.count(metric)) << metric;
    for (const auto& [k, v] : report.prediction.at(metric))
      if (v) {
        EXPECT_GE(*v, 0.0);
        EXPECT_LE(*v, 1.0);
      }
  }
  // recall is monotone in the cutoff
  EXPECT_LE(report.prediction.at("object").at(5).value(), report.prediction.at("object").at(10).value());
}

TEST(WriteReport, WritesJsonAndText) {
  ExperimentConfig cfg;
  cfg.data_dir = make_dataset("sgg_exp_write", 3, 1, 1);
  const auto report = run_experiment(cfg);
  const auto json_path = (std::filesystem::temp_directory_path() / "sgg_exp_write_report.json").string();
  const auto text_path = write_report(report, json_path);
  EXPECT_EQ(nlohmann::json::parse(read_text_file(json_path)), to_json(report));
  const auto text = read_text_file(text_path);
  EXPECT_NE(text.find("retrieval 3d-3d"), std::string::npos);
  EXPECT_LT(text.find("retrieval 3d-3d"), text.find("retrieval 2d-3d"));
}
