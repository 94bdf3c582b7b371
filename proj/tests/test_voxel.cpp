#include <gtest/gtest.h>

#include <random>

#include "ssc/error.hpp"
#include "ssc/voxel.hpp"

using namespace ssc;

namespace {

constexpr LabelId kFree = 0;

// Fine-step ray march: sample the segment sensor -> target centre every
// voxel/20 and report whether any sampled cell other than the target and
// the sensor's own cell is occupied.
bool marched_occluded(const VoxelGrid& g, const Point3& sensor, const VoxelIndex& target) {
  const Point3 end = g.spec.center(target);
  const double len = (end - sensor).norm();
  const int steps = std::max(1, static_cast<int>(std::ceil(len / (g.spec.voxel / 20))));
  const auto own = voxel_index(sensor, g.spec);
  for (int s = 0; s <= steps; ++s) {
    const Point3 p = sensor + (end - sensor) * (static_cast<double>(s) / steps);
    const auto idx = voxel_index(p, g.spec);
    if (!idx || *idx == target || (own && *idx == *own)) continue;
    if (g.label(*idx) != kFree) return true;
  }
  return false;
}

VoxelGrid random_scene(const GridSpec& spec, double density, std::uint64_t seed) {
  VoxelGrid g(spec, kFree);
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution occ(density);
  for (auto& l : g.labels) l = occ(rng) ? 3 : kFree;
  return g;
}

}  // namespace

TEST(GridSpec, PaperGridDimensions) {
  EXPECT_EQ(dsec_grid().dims, (VoxelIndex{128, 128, 16}));
  EXPECT_EQ(semantickitti_grid().dims, (VoxelIndex{256, 256, 32}));
  EXPECT_DOUBLE_EQ(dsec_grid().voxel, 0.4);
  EXPECT_DOUBLE_EQ(semantickitti_grid().voxel, 0.2);
}

TEST(GridSpec, RejectsDegenerateOrIndivisibleBoxes) {
  EXPECT_THROW(grid_from_bounds(Point3(0, 0, 0), Point3(0, 0, 0), 0.4), ConfigError);
  EXPECT_THROW(grid_from_bounds(Point3(0, 0, 0), Point3(1, 1, 1), 0.3), ConfigError);
  EXPECT_THROW(grid_from_bounds(Point3(0, 0, 0), Point3(1, 1, 1), 0.0), ConfigError);
  EXPECT_NO_THROW(grid_from_bounds(Point3(0, 0, 0), Point3(1, 1, 1), 0.25));
}

TEST(VoxelIndex, HalfOpenCells) {
  const auto g = dsec_grid();
  EXPECT_EQ(voxel_index(g.min_corner, g), (VoxelIndex{0, 0, 0}));
  EXPECT_EQ(voxel_index(g.min_corner + Point3::Constant(g.voxel / 2), g), (VoxelIndex{0, 0, 0}));
  EXPECT_FALSE(voxel_index(g.max_corner, g).has_value());
  EXPECT_FALSE(voxel_index(g.min_corner - Point3(1e-9, 0, 0), g).has_value());
}

TEST(GridSpec, LinearIndexRoundTrips) {
  const auto g = dsec_grid();
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> k(0, g.cell_count() - 1);
  for (int i = 0; i < 1000; ++i) {
    const auto idx = k(rng);
    EXPECT_EQ(g.linear(g.unlinear(idx)), idx);
    EXPECT_EQ(voxel_index(g.center(g.unlinear(idx)), g), g.unlinear(idx));
  }
}

TEST(Visibility, EmptySceneHasNoOcclusion) {
  const auto g = grid_from_bounds(Point3(-4, -4, -2), Point3(4, 4, 2), 0.5);
  const auto out = compute_visibility(VoxelGrid(g, kFree), Point3::Zero(), kFree);
  for (auto m : out.mask) EXPECT_EQ(m, mask::kValid);
}

TEST(Visibility, VoxelBehindAnOccupiedOneIsOccluded) {
  const auto g = grid_from_bounds(Point3(0, 0, 0), Point3(10, 1, 1), 1.0);
  VoxelGrid grid(g, kFree);
  grid.label({3, 0, 0}) = 3;
  grid.label({7, 0, 0}) = 3;
  const auto out = compute_visibility(grid, Point3(0.5, 0.5, 0.5), kFree);
  EXPECT_FALSE(out.occluded({3, 0, 0}));
  EXPECT_TRUE(out.occluded({7, 0, 0}));
  EXPECT_TRUE(out.occluded({5, 0, 0}));
  EXPECT_FALSE(out.occluded({2, 0, 0}));
}

TEST(Visibility, SensorInsideOccupiedVoxelSeesOut) {
  const auto g = grid_from_bounds(Point3(0, 0, 0), Point3(5, 5, 5), 1.0);
  VoxelGrid grid(g, kFree);
  grid.label({2, 2, 2}) = 3;
  const auto out = compute_visibility(grid, Point3(2.5, 2.5, 2.5), kFree);
  for (auto m : out.mask) EXPECT_FALSE(m & mask::kOccluded);
}

TEST(Visibility, AgreesWithFineRayMarchOnRandomScenes) {
  const auto g = grid_from_bounds(Point3(-6, -6, -2), Point3(6, 6, 2), 0.4);
  std::size_t agree = 0, total = 0;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-5.0, 5.0), uz(-1.5, 1.5);
  for (int scene = 0; scene < 6; ++scene) {
    const auto grid = random_scene(g, 0.02, 100 + scene);
    const Point3 sensor(u(rng), u(rng), uz(rng));
    const auto out = compute_visibility(grid, sensor, kFree);
    for (std::size_t k = 0; k < g.cell_count(); ++k) {
      const bool oracle = marched_occluded(grid, sensor, g.unlinear(k));
      agree += oracle == static_cast<bool>(out.mask[k] & mask::kOccluded);
      ++total;
    }
  }
  EXPECT_GE(static_cast<double>(agree) / total, 0.99) << agree << " / " << total;
}

TEST(Visibility, ParallelMatchesReference) {
  const auto g = grid_from_bounds(Point3(-8, -8, -2), Point3(8, 8, 2), 0.4);
  for (int s = 0; s < 3; ++s) {
    const auto grid = random_scene(g, 0.03, s);
    const auto a = compute_visibility(grid, Point3(0.1, -0.3, 0.2), kFree);
    const auto b = reference::compute_visibility(grid, Point3(0.1, -0.3, 0.2), kFree);
    EXPECT_EQ(a.mask, b.mask);
  }
}

TEST(Visibility, SensorOutsideGridStillWalksIn) {
  const auto g = grid_from_bounds(Point3(0, 0, 0), Point3(4, 1, 1), 1.0);
  VoxelGrid grid(g, kFree);
  grid.label({0, 0, 0}) = 3;
  const auto out = compute_visibility(grid, Point3(-3.0, 0.5, 0.5), kFree);
  EXPECT_FALSE(out.occluded({0, 0, 0}));
  EXPECT_TRUE(out.occluded({1, 0, 0}));
  EXPECT_TRUE(out.occluded({3, 0, 0}));
}

TEST(WalkToVoxel, VisitsAContiguousChain) {
  const auto g = grid_from_bounds(Point3(-5, -5, -5), Point3(5, 5, 5), 0.5);
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> c(0, 19);
  for (int t = 0; t < 200; ++t) {
    const VoxelIndex target{c(rng), c(rng), c(rng)};
    const auto cells = walk_to_voxel(g, Point3(0.1, 0.2, 0.3), target);
    VoxelIndex prev = *voxel_index(Point3(0.1, 0.2, 0.3), g);
    if (!cells.empty()) EXPECT_EQ(cells.front(), prev);
    for (std::size_t i = 1; i < cells.size(); ++i) {
      int moved = 0;
      for (int a = 0; a < 3; ++a) moved += std::abs(cells[i][a] - cells[i - 1][a]);
      EXPECT_EQ(moved, 1);
    }
    if (!cells.empty()) {
      int moved = 0;
      for (int a = 0; a < 3; ++a) moved += std::abs(target[a] - cells.back()[a]);
      EXPECT_EQ(moved, 1);
    }
  }
}
