#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "sgg/dataset.hpp"
#include "sgg/graph_io.hpp"
#include "sgg/relations.hpp"
#include "sgg/retrieval.hpp"
#include "sgg/scene_io.hpp"
#include "sgg/synth.hpp"

using namespace sgg;
using synth::PerturbationKind;

namespace {

synth::SyntheticScene scene_for(std::uint64_t seed) {
  synth::SceneSpec spec;
  spec.seed = seed;
  return synth::generate_scene(spec);
}

std::set<Attribute> static_of(const NodeInstance& n) { return static_attributes(n); }

synth::RescanSpec only(PerturbationKind kind, std::uint64_t seed, std::size_t count = 1) {
  synth::RescanSpec r;
  r.seed = seed;
  r.ops = {kind};
  r.op_count = count;
  return r;
}

}  // namespace

TEST(GenerateScene, IsDeterministicInSeed) {
  const auto a = scene_for(42);
  const auto b = scene_for(42);
  EXPECT_EQ(a.scene, b.scene);
  EXPECT_EQ(serialize_graph(a.graph), serialize_graph(b.graph));
  EXPECT_EQ(format_point_cloud("x", a.scene.points(), a.scene.mask()), format_point_cloud("x", b.scene.points(), b.scene.mask()));
}

TEST(GenerateScene, DistinctSeedsDiffer) {
  std::set<std::string> clouds;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = scene_for(seed);
    clouds.insert(format_point_cloud("x", s.scene.points(), s.scene.mask()));
  }
  EXPECT_EQ(clouds.size(), 100u);
}

TEST(GenerateScene, NodeCountWithinRange) {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const auto s = scene_for(seed);
    EXPECT_GE(s.graph.nodes().size(), 4u);
    EXPECT_LE(s.graph.nodes().size(), 9u);
  }
}

TEST(GenerateScene, CustomRangeIsHonoured) {
  synth::SceneSpec spec;
  spec.min_nodes = 12;
  spec.max_nodes = 16;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    spec.seed = seed;
    const auto s = synth::generate_scene(spec);
    EXPECT_GE(s.graph.nodes().size(), 12u);
    EXPECT_LE(s.graph.nodes().size(), 16u);
  }
}

TEST(GenerateScene, ExtractorRecoversEmittedGraph) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = scene_for(seed);
    EXPECT_EQ(extract_graph(s.scene, s.reference), s.graph) << "seed " << seed;
  }
}

TEST(GenerateScene, FloorPresentAndUnsupportedAndEveryOtherInstanceSupportedOnce) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto s = scene_for(seed);
    const auto floor = s.scene.find_by_label(vocab::kFloor);
    ASSERT_TRUE(floor.has_value());
    std::map<NodeId, int> supporters;
    for (const auto& [child, parent] : support_pairs_of(s.graph)) ++supporters[child];
    EXPECT_EQ(supporters.count(*floor), 0u);
    for (const auto& [id, n] : s.graph.nodes())
      if (id != *floor) EXPECT_EQ(supporters[id], 1) << "seed " << seed << " node " << id << " " << n.label();
  }
}

TEST(GenerateScene, PointBudgetsPerObject) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = scene_for(seed);
    for (const auto& [id, n] : s.scene.instances()) {
      if (n.label() == vocab::kFloor || n.label() == vocab::kWall) continue;
      EXPECT_GE(s.scene.indices(id).size(), 256u) << n.label();
      EXPECT_LE(s.scene.indices(id).size(), 2048u) << n.label();
    }
  }
}

TEST(GenerateScene, PredicateAllowlistAndClassCap) {
  synth::SceneSpec spec;
  spec.max_classes = 8;
  spec.predicates = {vocab::kStandingOn, vocab::kLeft, vocab::kRight};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    spec.seed = seed;
    const auto s = synth::generate_scene(spec);
    for (const auto& [key, e] : s.graph.edges())
      for (const auto& p : e.predicates) EXPECT_TRUE(p == vocab::kStandingOn || p == vocab::kLeft || p == vocab::kRight) << p;
    for (const auto& [id, n] : s.graph.nodes()) {
      const auto& priors = synth::default_class_priors();
      const auto it = std::find_if(priors.begin(), priors.end(), [&](const synth::ClassPrior& p) { return p.name == n.label(); });
      ASSERT_NE(it, priors.end());
      EXPECT_LT(it - priors.begin(), 8);
    }
  }
}

TEST(GenerateScene, InfeasibleSpecsThrow) {
  synth::SceneSpec spec;
  spec.min_nodes = 5;
  spec.max_nodes = 4;
  EXPECT_THROW(synth::generate_scene(spec), InfeasibleSpec);
  spec = {};
  spec.max_classes = 2;
  EXPECT_THROW(synth::generate_scene(spec), InfeasibleSpec);
  spec = {};
  spec.min_nodes = spec.max_nodes = 200;
  spec.max_retries = 2;
  EXPECT_THROW(synth::generate_scene(spec), InfeasibleSpec);
}

TEST(GenerateRescan, ZeroOpsIsIdentity) {
  const auto base = scene_for(5);
  synth::RescanSpec r;
  r.op_count = 0;
  const auto out = synth::generate_rescan(base, r);
  EXPECT_EQ(out.rescan.scene, base.scene);
  EXPECT_EQ(out.rescan.graph, base.graph);
  EXPECT_TRUE(out.log.applied.empty());
  EXPECT_TRUE(out.log.removed_relations.empty());
}

TEST(GenerateRescan, RemoveDropsOneNodeAndAllItsEdges) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto base = scene_for(seed);
    const auto out = synth::generate_rescan(base, only(PerturbationKind::remove_instance, seed));
    ASSERT_EQ(out.log.applied.size(), 1u);
    const NodeId gone = out.log.applied[0].instance;
    EXPECT_EQ(out.rescan.graph.nodes().size() + 1, base.graph.nodes().size());
    EXPECT_FALSE(out.rescan.graph.contains(gone));
    EXPECT_EQ(out.log.removed_nodes, std::vector<NodeId>{gone});
    for (const auto& [key, e] : base.graph.edges())
      if (key.first == gone || key.second == gone)
        for (const auto& p : e.predicates)
          EXPECT_TRUE(std::find(out.log.removed_relations.begin(), out.log.removed_relations.end(), RelationTriple{key.first, p, key.second}) !=
                      out.log.removed_relations.end());
  }
}

TEST(GenerateRescan, MovedGeometryAgreesWithExtractor) {
  std::size_t moves = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto base = scene_for(seed);
    const auto out = synth::generate_rescan(base, only(PerturbationKind::move_instance, seed, 2));
    moves += out.log.applied.size();
    EXPECT_EQ(extract_graph(out.rescan.scene, out.rescan.reference), out.rescan.graph) << "seed " << seed;
    // moved instances keep their size
    for (const auto& a : out.log.applied) {
      const Vec3 before = base.scene.bbox(a.instance).extent();
      const Vec3 after = out.rescan.scene.bbox(a.instance).extent();
      EXPECT_NEAR((before - after).norm(), 0.0, 1e-5);
    }
  }
  EXPECT_GT(moves, 0u);
}

TEST(GenerateRescan, StaticAttributesSurviveEveryOp) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto base = scene_for(seed);
    synth::RescanSpec r;
    r.seed = seed;
    r.op_count = 3;
    const auto out = synth::generate_rescan(base, r);
    for (const auto& [id, n] : out.rescan.graph.nodes())
      if (base.graph.contains(id)) EXPECT_EQ(static_of(n), static_of(base.graph.node(id)));
  }
}

TEST(GenerateRescan, ToggleChangesOnlyStateAttributes) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto base = scene_for(seed);
    try {
      const auto out = synth::generate_rescan(base, only(PerturbationKind::toggle_state, seed));
      const NodeId id = out.log.applied.at(0).instance;
      EXPECT_NE(out.rescan.graph.node(id).attributes, base.graph.node(id).attributes);
      EXPECT_EQ(out.rescan.scene.points(), base.scene.points());
      EXPECT_EQ(to_multisets(out.rescan.graph), to_multisets(base.graph));
    } catch (const InfeasibleSpec&) {
      // no instance with a state in this scene
    }
  }
}

TEST(GenerateRescan, FloorIsNeverRemoved) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto base = scene_for(seed);
    synth::RescanSpec r;
    r.seed = seed;
    r.ops = {PerturbationKind::remove_instance};
    r.op_count = 3;
    try {
      const auto out = synth::generate_rescan(base, r);
      EXPECT_TRUE(out.rescan.scene.find_by_label(vocab::kFloor).has_value());
    } catch (const InfeasibleSpec&) {
      // ran out of removable instances
    }
  }
}

TEST(GenerateRescan, LogResiduesEqualDetectedChanges) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto base = scene_for(seed);
    synth::RescanSpec r;
    r.seed = seed + 1000;
    r.op_count = 1 + seed % 4;
    const auto out = synth::generate_rescan(base, r);
    EXPECT_EQ(synth::residues_from_log(out.log, base.graph, out.rescan.graph),
              detect_changes(to_multisets(base.graph), to_multisets(out.rescan.graph)));
  }
}

TEST(Dataset, WriteAndLoadRoundTrip) {
  const auto dir = (std::filesystem::temp_directory_path() / "sgg_dataset_test").string();
  std::filesystem::remove_all(dir);
  DatasetSpec spec;
  spec.seed = 9;
  spec.count = 3;
  spec.rescans_per_scene = 2;
  write_dataset(dir, spec);
  const auto records = load_dataset(dir);
  ASSERT_EQ(records.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto gen = generate_record(spec, k);
    EXPECT_EQ(records[k].name, scene_name(k));
    EXPECT_EQ(records[k].graph, gen.base.graph);
    EXPECT_EQ(records[k].scene, gen.base.scene);
    ASSERT_EQ(records[k].rescans.size(), 2u);
    EXPECT_EQ(records[k].rescans[1].graph, gen.rescans[1].rescan.graph);
    EXPECT_EQ(records[k].rescans[1].graph.scene_id(), "scene" + std::to_string(k) + ".rescan1");
    EXPECT_FALSE(records[k].rescans[0].log.empty());
  }
  EXPECT_THROW(load_dataset(dir + "/missing"), DataError);
}
