#pragma once

#include <cstdint>
#include <vector>

#include "ssc/core.hpp"
#include "ssc/voxel.hpp"

namespace ssc {

/// Plane n . p = offset with unit normal.
struct Plane {
  Point3 normal = Point3::UnitZ();
  double offset = 0.0;

  double signed_distance(const Point3& p) const { return normal.dot(p) - offset; }
  /// Height of the plane above (x, y); requires a non-vertical normal.
  double height_at(double x, double y) const;
};

struct GroundFit {
  Plane plane;
  LabeledPointCloud ground;
  LabeledPointCloud non_ground;
  std::size_t inliers = 0;
};

struct GroundFitParams {
  double epsilon = 0.2;
  int iterations = 512;
  std::uint64_t seed = 0;
};

/// Inlier-maximising plane: `iterations` random 3-point hypotheses, the best
/// refit by least squares on its inliers. Ground = |n.p - offset| < epsilon.
/// The normal is oriented with non-negative z.
GroundFit fit_ground(const LabeledPointCloud& static_map, const GroundFitParams& params);

struct ClusterAssignment {
  std::vector<Point3> centroids;
  std::vector<std::uint32_t> assignment;
  double objective = 0.0;
  /// Objective after seeding and after every Lloyd iteration.
  std::vector<double> objective_history;
  int iterations = 0;
  bool k_clamped = false;
};

/// Lloyd's algorithm from k-means++ seeding. A point switches cluster only
/// when strictly closer, so the loop stops at an assignment fixed point.
ClusterAssignment kmeans_frame(const LabeledPointCloud& points, std::size_t k, int max_iters,
                               std::uint64_t seed);

/// k = max(1, round(n / points_per_cluster)).
std::size_t default_cluster_count(std::size_t n, double points_per_cluster = 400.0);

/// Each cluster takes its modal label; `unknown` only wins an all-unknown
/// cluster, ties go to the smaller id.
LabeledPointCloud relabel_clusters(const LabeledPointCloud& points,
                                   const ClusterAssignment& assignment, LabelId unknown_id);

struct NonGroundRefineParams {
  double points_per_cluster = 400.0;
  int max_iters = 50;
  std::uint64_t seed = 0;
};

/// Runs kmeans_frame + relabel_clusters independently for each capture time.
/// Output keeps the input point order.
LabeledPointCloud refine_non_ground(const LabeledPointCloud& non_ground, LabelId unknown_id,
                                    const NonGroundRefineParams& params);

/// Winner of a per-voxel label tally: most votes, ties to the smaller id,
/// `unknown` only when nothing else voted, `free` when empty.
LabelId vote_winner(std::span<const std::pair<LabelId, std::uint32_t>> tally, LabelId free_id,
                    LabelId unknown_id);

/// Per-voxel majority vote over contained points. Points labelled `free`
/// cast no vote. Every voxel's mask is set valid.
VoxelGrid vote_voxels(const LabeledPointCloud& cloud, const GridSpec& grid, LabelId free_id,
                      LabelId unknown_id);

namespace reference {
VoxelGrid vote_voxels(const LabeledPointCloud& cloud, const GridSpec& grid, LabelId free_id,
                      LabelId unknown_id);
}  // namespace reference

}  // namespace ssc
