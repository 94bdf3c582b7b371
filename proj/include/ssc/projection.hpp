#pragma once

#include <cstdint>
#include <vector>

#include "ssc/core.hpp"

namespace ssc {

/// Pinhole camera without distortion. `cam_from_lidar` maps LiDAR-frame
/// points (x forward, y left, z up) into the camera frame (z forward).
struct CameraModel {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  Pose cam_from_lidar;

  /// Throws ConfigError when the intrinsics are out of range.
  void validate() const;
};

/// Row-major raster of label ids, one per pixel.
struct SemanticImage {
  int width = 0, height = 0;
  std::vector<LabelId> label_ids;

  LabelId at(int u, int v) const { return label_ids[static_cast<std::size_t>(v) * width + u]; }
};

struct PixelHit {
  std::size_t point_index;
  double u, v;
  double depth;
};

std::vector<PixelHit> project_to_image(const LabeledPointCloud& cloud, const CameraModel& cam);

/// Inverse of the pinhole projection for a pixel at the given depth, in the
/// camera frame.
Point3 unproject(const CameraModel& cam, double u, double v, double depth);

struct StaticDynamicSplit {
  LabeledPointCloud static_points;
  LabeledPointCloud dynamic_points;
};

/// Transfers the nearest-pixel label to every in-view point and splits by the
/// label's dynamic flag. Out-of-view points become `unknown` and stay static.
StaticDynamicSplit label_points(const LabeledPointCloud& cloud, const SemanticImage& img,
                                const CameraModel& cam, const LabelSet& labelset);

struct AggregatedMaps {
  LabeledPointCloud static_map;
  LabeledPointCloud dynamic_map;
};

/// Moves every frame into the world frame and concatenates in frame order.
AggregatedMaps accumulate_maps(const std::vector<StaticDynamicSplit>& frames,
                               const std::vector<Pose>& world_from_sensor);

}  // namespace ssc
