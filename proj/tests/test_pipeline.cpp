#include <gtest/gtest.h>

#include "scene.hpp"
#include "ssc/error.hpp"
#include "ssc/io.hpp"
#include "ssc/parallel.hpp"
#include "ssc/pipeline.hpp"

namespace fs = std::filesystem;
using namespace ssc;
using ssc::testing::Scene;

namespace {

class PipelineTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = ssc::testing::temp_dir("pipeline");
    files_ = ssc::testing::write_scene(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path dir_;
  ssc::testing::SceneFiles files_;
};

std::vector<io::Bytes> read_outputs(const fs::path& out) {
  std::vector<io::Bytes> v;
  for (int i = 0; i < Scene::kFrames; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%06d.sscv", i);
    v.push_back(io::read_file(out / "synth" / name));
  }
  return v;
}

}  // namespace

TEST_F(PipelineTest, MovingBoxIsContinuousWithoutTrails) {
  const PipelineConfig config;
  const auto report = run_pipeline(load_manifest(files_.manifest), config, dir_ / "out");
  ASSERT_EQ(report.frame_count(), 3u);
  const Scene scene;
  for (int i = 0; i < Scene::kFrames; ++i) {
    const auto grid = io::decode_voxel_grid(read_outputs(dir_ / "out")[i]);
    const auto footprint = scene.footprint(i, grid.spec);
    std::size_t car = 0;
    for (std::size_t k = 0; k < grid.labels.size(); ++k) {
      if (grid.labels[k] != Scene::kCar) continue;
      ++car;
      int best = 1 << 20;
      for (auto f : footprint) best = std::min(best, ssc::testing::voxel_distance(grid.spec, k, f));
      EXPECT_LE(best, 1) << "frame " << i << " voxel " << k;
    }
    EXPECT_GT(car, 20u) << "frame " << i;
    EXPECT_GT(report.sequences[0].frames[i].placed_points, 0u);
  }
}

TEST_F(PipelineTest, OutputsAreBitwiseStableAcrossRunsAndWorkerCounts) {
  const PipelineConfig config;
  const auto m = load_manifest(files_.manifest);
  set_jobs(1);
  run_pipeline(m, config, dir_ / "a");
  set_jobs(4);
  run_pipeline(m, config, dir_ / "b");
  run_pipeline(m, config, dir_ / "c");
  set_jobs(max_jobs());
  EXPECT_EQ(read_outputs(dir_ / "a"), read_outputs(dir_ / "b"));
  EXPECT_EQ(read_outputs(dir_ / "b"), read_outputs(dir_ / "c"));
}

TEST_F(PipelineTest, ReportCountsStagesAndFrames) {
  run_pipeline(load_manifest(files_.manifest), PipelineConfig{}, dir_ / "out");
  const auto j = io::parse_json(io::read_text(dir_ / "out" / "report.json"), "report");
  EXPECT_EQ(j.at("frames").get<int>(), 3);
  const auto& seq = j.at("sequences").at(0);
  for (const char* stage : {"load", "fit_ground", "refine", "build_model", "voxelize"}) {
    EXPECT_TRUE(seq.at("timings_s").contains(stage)) << stage;
  }
  EXPECT_GT(seq.at("frames").at(0).at("occupancy").get<double>(), 0.0);
  EXPECT_EQ(seq.at("points").at("static").get<std::size_t>() + seq.at("points").at("dynamic").get<std::size_t>(),
            [&] {
              std::size_t n = 0;
              for (int i = 0; i < 3; ++i) n += Scene().scan(i).size();
              return n;
            }());
}

TEST(PipelineEdge, EmptySequenceYieldsZeroFrames) {
  const auto dir = ssc::testing::temp_dir("empty");
  const auto m = ssc::testing::write_empty_sequence(dir);
  const auto report = run_pipeline(load_manifest(m), PipelineConfig{}, dir / "out");
  EXPECT_EQ(report.frame_count(), 0u);
  const auto j = io::parse_json(io::read_text(dir / "out" / "report.json"), "report");
  EXPECT_EQ(j.at("frames").get<int>(), 0);
  fs::remove_all(dir);
}

TEST_F(PipelineTest, MissingFileIsALoadErrorNamingThePath) {
  fs::remove(dir_ / "synth" / "frame_1.bin");
  try {
    load_manifest(files_.manifest);
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(e.path().find("frame_1.bin"), std::string::npos);
  }
}

TEST_F(PipelineTest, StageFailureLeavesNoPartialOutput) {
  // A corrupt point file surfaces as a stage error and nothing is written.
  io::write_text_atomic(dir_ / "synth" / "frame_2.bin", "not a point cloud");
  try {
    run_pipeline(load_manifest(files_.manifest), PipelineConfig{}, dir_ / "out");
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "label_points");
    EXPECT_EQ(e.frame(), 2);
  }
  EXPECT_TRUE(fs::is_empty(dir_ / "out"));
}

TEST_F(PipelineTest, DynamicPointsWithoutTracksAreRejected) {
  fs::remove(files_.tracks);
  try {
    run_pipeline(load_manifest(files_.manifest), PipelineConfig{}, dir_ / "out");
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "tracks");
  }
}

TEST(PipelineConfigJson, RoundTripsAndKeepsDefaults) {
  PipelineConfig c;
  c.ground_epsilon = 0.3;
  c.dynamic_policy = DynamicPolicy::kMerge;
  c.grid = semantickitti_grid();
  const auto back = config_from_json(config_to_json(c));
  EXPECT_EQ(back.ground_epsilon, 0.3);
  EXPECT_EQ(back.dynamic_policy, DynamicPolicy::kMerge);
  EXPECT_EQ(back.grid.dims, (VoxelIndex{256, 256, 32}));
  const auto partial = config_from_json(nlohmann::json{{"seed", 7}});
  EXPECT_EQ(partial.seed, 7u);
  EXPECT_EQ(partial.ransac_iterations, 512);
  EXPECT_THROW(config_from_json(nlohmann::json{{"tie_break", "largest-id"}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"ground", {{"epsilon", -1}}}}), ConfigError);
}

TEST(ComposeFrame, ReplacePolicyDropsClaimedAndOrphanPoints) {
  const LabelSet labels = default_labelset();
  InstanceTrack t;
  t.instance_id = 1;
  t.label = 4;
  t.keyframes = {{0, 0.0, 0.0, 0.0}};
  t.model = make_cloud(std::vector<Point3>{Point3(0, 0, 0)}, 4, 0);
  LabeledPointCloud dyn;
  dyn.push_back(Point3(0.5, 0, 0), 4, 0);   // claimed
  dyn.push_back(Point3(10, 0, 0), 4, 0);    // orphan
  dyn.push_back(Point3(0.5, 0, 0), 4, 99);  // other frame
  PipelineConfig c;
  auto f = compose_frame({}, dyn, {t}, std::nullopt, 0, c, labels);
  EXPECT_EQ(f.world.size(), 1u);
  c.keep_orphans = true;
  f = compose_frame({}, dyn, {t}, std::nullopt, 0, c, labels);
  EXPECT_EQ(f.world.size(), 2u);
  c.dynamic_policy = DynamicPolicy::kMerge;
  f = compose_frame({}, dyn, {t}, std::nullopt, 0, c, labels);
  EXPECT_EQ(f.world.size(), 3u);
  EXPECT_EQ(f.placed_points, 1u);
}
