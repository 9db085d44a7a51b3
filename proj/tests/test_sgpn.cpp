#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>

#include "sgg/sgpn.hpp"
#include "sgg/synth.hpp"
#include "support/finite_difference.hpp"
#include "support/toy_scene.hpp"

using namespace sgg;
using namespace sgg::sgpn;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.classes = {"chair", "table", "floor"};
  c.predicates = {"left", "standing on"};
  c.point_widths = {5, 4};
  c.feature_width = 4;
  c.gcn_layers = 2;
  c.head_hidden = 4;
  c.points_per_set = 6;
  c.seed = 3;
  return c;
}

/// Three nodes, all six ordered pairs, random centered points.
SceneInput<double> random_input(Rng& rng, std::size_t per_set) {
  SceneInput<double> in;
  in.nodes = {10, 20, 30};
  in.points_per_set = per_set;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      if (i != j) {
        in.pairs.push_back({in.nodes[i], in.nodes[j]});
        in.subject_index.push_back(i);
        in.object_index.push_back(j);
      }
  in.node_points.resize(static_cast<Eigen::Index>(3 * per_set), 3);
  in.edge_points.resize(static_cast<Eigen::Index>(6 * per_set), 4);
  for (Eigen::Index k = 0; k < in.node_points.size(); ++k) in.node_points.data()[k] = rng.uniform(-1, 1);
  for (Eigen::Index r = 0; r < in.edge_points.rows(); ++r) {
    for (Eigen::Index c = 0; c < 3; ++c) in.edge_points(r, c) = rng.uniform(-1, 1);
    in.edge_points(r, 3) = static_cast<double>(rng.index(3));
  }
  return in;
}

GroundTruth random_truth(Rng& rng, const ModelConfig& cfg, std::size_t nodes, std::size_t pairs) {
  GroundTruth t;
  for (std::size_t i = 0; i < nodes; ++i) t.labels.push_back(rng.index(cfg.classes.size()));
  t.predicate_targets = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(pairs), static_cast<Eigen::Index>(cfg.predicates.size()));
  for (Eigen::Index k = 0; k < t.predicate_targets.size(); ++k) t.predicate_targets.data()[k] = rng.uniform() < 0.4 ? 1.0 : 0.0;
  return t;
}

double loss_value(Model<double>& m, const SceneInput<double>& in, const GroundTruth& truth, const std::vector<double>& alpha, const TrainConfig& cfg) {
  ad::Tape<double> tape;
  const auto v = forward_vars(tape, m, in);
  return tape.value(loss_var(tape, v, truth, alpha, cfg))(0, 0);
}

Scene toy_room() {
  return fixtures::ToyScene()
      .box(1, "floor", {Vec3(0, 0, -0.05), Vec3(2, 2, 0)}, 0.2)
      .box(2, "table", {Vec3(0.2, 0.2, 0.0), Vec3(0.8, 0.8, 0.6)}, 0.1)
      .box(3, "chair", {Vec3(1.2, 1.2, 0.0), Vec3(1.6, 1.6, 0.8)}, 0.1)
      .build("toy");
}

SceneGraph toy_graph() {
  SceneGraph g("toy");
  g.add_node(NodeInstance{1, ClassHierarchy({"floor"}), {}});
  g.add_node(NodeInstance{2, ClassHierarchy({"table"}), {}});
  g.add_node(NodeInstance{3, ClassHierarchy({"chair"}), {}});
  g.merge_edge(2, 1, "standing on");
  g.merge_edge(3, 1, "standing on");
  g.merge_edge(2, 3, "left");
  return g;
}

std::vector<Sample> synthetic_samples(std::size_t count, std::uint64_t seed) {
  std::vector<Sample> out;
  for (std::size_t k = 0; k < count; ++k) {
    synth::SceneSpec spec;
    spec.seed = seed + k;
    spec.max_nodes = 5;
    spec.predicates = {vocab::kStandingOn, vocab::kLeft, vocab::kRight};
    auto s = synth::generate_scene(spec);
    out.push_back({s.scene, s.graph});
  }
  return out;
}

ModelConfig small_config(const std::vector<Sample>& data) {
  ModelConfig c;
  std::tie(c.classes, c.predicates) = vocabulary_of(data);
  c.point_widths = {16};
  c.feature_width = 16;
  c.gcn_layers = 2;
  c.head_hidden = 16;
  c.points_per_set = 32;
  return c;
}

}  // namespace

TEST(SgpnModel, ParameterLayout) {
  Model<double> m(tiny_config());
  EXPECT_TRUE(m.has_parameter("gcn.1.g1.w"));
  EXPECT_EQ(m.parameter("gcn.0.g1.w").value.data.rows(), 12);
  EXPECT_EQ(m.parameter("obj_head.out.w").value.data.cols(), 3);
  EXPECT_EQ(m.parameter("pred_head.out.w").value.data.cols(), 2);
  EXPECT_LE(m.parameter_count(), 10000u);
  EXPECT_THROW(m.parameter("nope"), ConfigError);

  auto flat = tiny_config();
  flat.use_gcn = false;
  Model<double> baseline(flat);
  EXPECT_FALSE(baseline.has_parameter("gcn.0.g1.w"));
  EXPECT_LT(baseline.parameter_count(), m.parameter_count());
}

TEST(SgpnModel, EmptyVocabularyThrows) {
  auto c = tiny_config();
  c.classes.clear();
  EXPECT_THROW(Model<double>{c}, VocabularyError);
  c = tiny_config();
  c.predicates.clear();
  EXPECT_THROW(Model<double>{c}, VocabularyError);
}

TEST(SgpnModel, InitializationDependsOnlyOnSeed) {
  Model<double> a(tiny_config()), b(tiny_config());
  auto other = tiny_config();
  other.seed = 4;
  Model<double> c(other);
  EXPECT_EQ(a.parameter("gcn.0.g1.w").value.data, b.parameter("gcn.0.g1.w").value.data);
  EXPECT_NE(a.parameter("gcn.0.g1.w").value.data, c.parameter("gcn.0.g1.w").value.data);
}

TEST(SgpnGradient, FullModelMatchesFiniteDifferences) {
  for (const auto& [use_gcn, from] : {std::pair{true, ClassifyFrom::pointnet}, std::pair{true, ClassifyFrom::gcn}, std::pair{false, ClassifyFrom::pointnet}}) {
    Rng rng(41);
    auto cfg = tiny_config();
    cfg.use_gcn = use_gcn;
    cfg.classify_from = from;
    Model<double> m(cfg);
    const auto in = random_input(rng, cfg.points_per_set);
    const auto truth = random_truth(rng, cfg, 3, 6);
    const std::vector<double> alpha{0.5, 1.0, 1.5};
    const TrainConfig tc;
    m.zero_grad();
    accumulate_gradients(m, in, truth, alpha, tc);
    const auto checks = fixtures::check_gradients(m.parameter_ptrs(), [&] { return loss_value(m, in, truth, alpha, tc); }, 1e-5);
    for (const auto& g : checks) EXPECT_LT(g.relative_error, 1e-3) << g.name << " gcn " << use_gcn << " from " << static_cast<int>(from);
  }
}

TEST(SgpnLoss, TapeLossEqualsProbabilityLoss) {
  Rng rng(42);
  const auto cfg = tiny_config();
  Model<double> m(cfg);
  const auto in = random_input(rng, cfg.points_per_set);
  const std::vector<double> alpha{0.7, 1.1, 1.2};
  TrainConfig tc;
  SceneGraph gt("x");
  for (NodeId id : in.nodes) gt.add_node(NodeInstance{id, ClassHierarchy({cfg.classes[rng.index(3)]}), {}});
  for (const auto& [a, b] : in.pairs)
    if (rng.uniform() < 0.5) gt.merge_edge(a, b, cfg.predicates[rng.index(2)]);
  const auto truth = ground_truth(cfg, in.nodes, in.pairs, gt);
  for (const double gamma : {0.0, 2.0}) {
    tc.gamma = gamma;
    EXPECT_NEAR(loss_value(m, in, truth, alpha, tc), total_loss(forward(m, in), gt, alpha, tc), 1e-10) << "gamma " << gamma;
  }
}

TEST(SgpnLoss, GammaZeroIsWeightedCrossEntropy) {
  PredictionScores s;
  s.classes = {"a", "b"};
  s.predicates = {"p"};
  s.nodes = {1, 2};
  s.pairs = {{1, 2}, {2, 1}};
  s.object_probs.resize(2, 2);
  s.object_probs << 0.7, 0.3, 0.4, 0.6;
  s.predicate_probs.resize(2, 1);
  s.predicate_probs << 0.8, 0.1;
  SceneGraph gt("x");
  gt.add_node(NodeInstance{1, ClassHierarchy({"a"}), {}});
  gt.add_node(NodeInstance{2, ClassHierarchy({"a"}), {}});
  gt.merge_edge(1, 2, "p");
  TrainConfig tc;
  tc.gamma = 0.0;
  const std::vector<double> alpha{1.0, 1.0};
  const double l_obj = -(std::log(0.7) + std::log(0.4)) / 2;
  const double l_pred = (-0.25 * std::log(0.8) - 0.75 * std::log(0.9)) / 2;
  EXPECT_NEAR(total_loss(s, gt, alpha, tc), 0.1 * l_obj + l_pred, 1e-14);
}

TEST(SgpnForward, DeterministicOnScene) {
  auto cfg = tiny_config();
  Model<double> m(cfg);
  const Scene scene = toy_room();
  const auto a = forward(m, scene);
  const auto b = forward(m, scene);
  EXPECT_EQ(a.object_probs, b.object_probs);
  EXPECT_EQ(a.predicate_probs, b.predicate_probs);
  EXPECT_EQ(a.nodes, (std::vector<NodeId>{1, 2, 3}));
  EXPECT_EQ(a.pairs.size(), 6u);
  for (Eigen::Index r = 0; r < a.object_probs.rows(); ++r) EXPECT_NEAR(a.object_probs.row(r).sum(), 1.0, 1e-12);
}

TEST(SgpnForward, EquivariantUnderNodeReordering) {
  Rng rng(43);
  const auto cfg = tiny_config();
  Model<double> m(cfg);
  const auto in = random_input(rng, cfg.points_per_set);
  // reorder nodes as (30, 10, 20)
  const std::vector<std::size_t> perm{2, 0, 1};
  const auto s = static_cast<Eigen::Index>(cfg.points_per_set);
  SceneInput<double> out = in;
  out.nodes.clear();
  out.pairs.clear();
  out.subject_index.clear();
  out.object_index.clear();
  for (std::size_t i = 0; i < 3; ++i) {
    out.nodes.push_back(in.nodes[perm[i]]);
    out.node_points.middleRows(static_cast<Eigen::Index>(i) * s, s) = in.node_points.middleRows(static_cast<Eigen::Index>(perm[i]) * s, s);
  }
  std::size_t e = 0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      if (i != j) {
        const EdgeKey key{out.nodes[i], out.nodes[j]};
        const auto src = static_cast<Eigen::Index>(std::find(in.pairs.begin(), in.pairs.end(), key) - in.pairs.begin());
        out.pairs.push_back(key);
        out.subject_index.push_back(i);
        out.object_index.push_back(j);
        out.edge_points.middleRows(static_cast<Eigen::Index>(e++) * s, s) = in.edge_points.middleRows(src * s, s);
      }
  const auto a = forward(m, in);
  const auto b = forward(m, out);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_LT((a.object_probs.row(static_cast<Eigen::Index>(a.node_index(b.nodes[i]))) - b.object_probs.row(static_cast<Eigen::Index>(i))).norm(), 1e-12);
  for (std::size_t k = 0; k < b.pairs.size(); ++k) {
    const auto src = static_cast<Eigen::Index>(std::find(a.pairs.begin(), a.pairs.end(), b.pairs[k]) - a.pairs.begin());
    EXPECT_LT((a.predicate_probs.row(src) - b.predicate_probs.row(static_cast<Eigen::Index>(k))).norm(), 1e-12);
  }
}

TEST(SgpnForward, PredicatesAreIndependentSigmoids) {
  Rng rng(44);
  const auto cfg = tiny_config();
  Model<double> m(cfg);
  const auto in = random_input(rng, cfg.points_per_set);
  const auto before = forward(m, in);
  m.parameter("pred_head.out.b").value.data(0, 0) += 3.0;
  const auto after = forward(m, in);
  EXPECT_EQ(before.predicate_probs.col(1), after.predicate_probs.col(1));
  for (Eigen::Index r = 0; r < before.predicate_probs.rows(); ++r) EXPECT_GT(after.predicate_probs(r, 0), before.predicate_probs(r, 0));
  // several predicates of one pair can exceed 0.5 together
  m.parameter("pred_head.out.b").value.data.setConstant(20.0);
  const auto saturated = forward(m, in);
  EXPECT_GT(saturated.predicate_probs.minCoeff(), 0.5);
}

TEST(SgpnInput, SamplesFixedSizeSetsAndRejectsTinyScenes) {
  Rng rng(45);
  const auto in = prepare_input<float>(toy_room(), 40, rng);
  EXPECT_EQ(in.node_points.rows(), 3 * 40);
  EXPECT_EQ(in.edge_points.rows(), 6 * 40);
  EXPECT_EQ(in.edge_points.cols(), 4);
  for (Eigen::Index r = 0; r < in.edge_points.rows(); ++r) EXPECT_TRUE(in.edge_points(r, 3) == 0 || in.edge_points(r, 3) == 1 || in.edge_points(r, 3) == 2);
  const Scene lonely = fixtures::ToyScene().box(1, "chair", {Vec3(0, 0, 0), Vec3(1, 1, 1)}, 0.25).build("lonely");
  EXPECT_THROW(prepare_input<float>(lonely, 8, rng), TooFewInstances);
}

TEST(SgpnInput, SampleIndicesWithAndWithoutReplacement) {
  Rng rng(46);
  auto few = sample_indices(3, 7, rng);
  EXPECT_EQ(few.size(), 7u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(few[i], i);
  auto many = sample_indices(50, 10, rng);
  std::sort(many.begin(), many.end());
  EXPECT_EQ(std::adjacent_find(many.begin(), many.end()), many.end());
  EXPECT_THROW(sample_indices(0, 3, rng), EmptyPointSet);
}

TEST(SgpnTraining, InverseFrequencyAlphaHasMeanOne) {
  const auto g = toy_graph();
  const auto alpha = inverse_frequency_alpha({"chair", "table", "floor", "lamp"}, {&g, &g});
  EXPECT_NEAR(std::accumulate(alpha.begin(), alpha.end(), 0.0) / 4.0, 1.0, 1e-12);
  EXPECT_GT(alpha[3], alpha[0]);
  EXPECT_DOUBLE_EQ(alpha[0], alpha[1]);
}

TEST(SgpnTraining, OneEpochOnOneSceneLogsOnce) {
  const auto data = synthetic_samples(1, 70);
  TrainConfig tc;
  tc.epochs = 1;
  std::size_t calls = 0;
  const auto r = train(data, data, small_config(data), tc, [&](const EpochLog&) { ++calls; });
  ASSERT_EQ(r.log.size(), 1u);
  EXPECT_EQ(calls, 1u);
  EXPECT_EQ(r.log[0].epoch, 1u);
  EXPECT_TRUE(std::isfinite(r.log[0].mean_loss));
  EXPECT_TRUE(r.log[0].val_predicate_recall.has_value());
  EXPECT_TRUE(r.log[0].val_object_recall.has_value());
}

TEST(SgpnTraining, SameSeedsGiveIdenticalRuns) {
  const auto data = synthetic_samples(3, 80);
  TrainConfig tc;
  tc.epochs = 2;
  tc.learning_rate = 1e-3;
  const auto a = train(data, {}, small_config(data), tc);
  const auto b = train(data, {}, small_config(data), tc);
  ASSERT_EQ(a.log.size(), 2u);
  EXPECT_EQ(a.log[1].mean_loss, b.log[1].mean_loss);
  EXPECT_EQ(checkpoint_to_json(a.model), checkpoint_to_json(b.model));
  EXPECT_FALSE(a.log[1].val_predicate_recall.has_value());
}

TEST(SgpnTraining, LossDecreasesOnRepeatedScene) {
  const auto data = synthetic_samples(1, 90);
  TrainConfig tc;
  tc.epochs = 30;
  tc.learning_rate = 1e-3;
  const auto r = train(data, {}, small_config(data), tc);
  EXPECT_LT(r.log.back().mean_loss, r.log.front().mean_loss);
}

TEST(SgpnTraining, EmptyDatasetThrows) { EXPECT_THROW(train({}, {}, tiny_config(), TrainConfig{}), EmptyDataset); }

TEST(SgpnTraining, UnknownClassInGroundTruthThrows) {
  auto cfg = tiny_config();
  cfg.classes = {"chair", "table"};
  EXPECT_THROW(ground_truth(cfg, {1, 2, 3}, {}, toy_graph()), VocabularyError);
}

TEST(SgpnCheckpoint, RoundTripPreservesPredictions) {
  const auto path = (std::filesystem::temp_directory_path() / "sgg_ckpt_test.json").string();
  TrainConfig tc;
  tc.epochs = 7;
  Model<float> m(tiny_config());
  save_checkpoint(m, path, tc);
  auto loaded = load_checkpoint<float>(path);
  EXPECT_EQ(loaded.config(), m.config());
  const Scene scene = toy_room();
  EXPECT_EQ(forward(loaded, scene).object_probs, forward(m, scene).object_probs);
  EXPECT_EQ(forward(loaded, scene).predicate_probs, forward(m, scene).predicate_probs);
  EXPECT_EQ(checkpoint_to_json(loaded), checkpoint_to_json(m));
}

TEST(SgpnCheckpoint, MalformedCheckpointsThrow) {
  Model<float> m(tiny_config());
  auto j = checkpoint_to_json(m);
  auto bad = j;
  bad["format"] = "other";
  EXPECT_THROW(checkpoint_from_json(bad), ParseError);
  bad = j;
  bad["version"] = 99;
  EXPECT_THROW(checkpoint_from_json(bad), ParseError);
  bad = j;
  bad["parameters"].erase(0);
  EXPECT_THROW(checkpoint_from_json(bad), ParseError);
  bad = j;
  bad["parameters"][0]["rows"] = 1000;
  EXPECT_THROW(checkpoint_from_json(bad), ParseError);
  bad = j;
  bad["parameters"][0]["name"] = "stranger";
  EXPECT_THROW(checkpoint_from_json(bad), ParseError);
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.json"), DataError);
}

TEST(SgpnConfig, JsonRoundTripAndValidation) {
  const auto c = tiny_config();
  EXPECT_EQ(model_config_from_json(to_json(c)), c);
  EXPECT_THROW(model_config_from_json(nlohmann::json{{"classify_from", "magic"}}), ConfigError);
  EXPECT_THROW(model_config_from_json(nlohmann::json{{"feature_width", "wide"}}), ConfigError);
  EXPECT_THROW(model_config_from_json(nlohmann::json{{"point_widths", nlohmann::json::array()}}), ConfigError);
  EXPECT_THROW(model_config_from_json(nlohmann::json::array()), ConfigError);
  EXPECT_THROW(train_config_from_json(nlohmann::json{{"alpha_pred", 1.0}}), ConfigError);
  EXPECT_THROW(train_config_from_json(nlohmann::json{{"gamma", -1.0}}), ConfigError);
  EXPECT_THROW(train_config_from_json(nlohmann::json{{"learning_rate", 0.0}}), ConfigError);
  const auto t = train_config_from_json(nlohmann::json{{"epochs", 3}});
  EXPECT_EQ(t.epochs, 3u);
  EXPECT_DOUBLE_EQ(t.gamma, 2.0);
  EXPECT_DOUBLE_EQ(t.lambda_obj, 0.1);
}
