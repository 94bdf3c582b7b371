#pragma once

// Synthetic three-frame scene: a car box driving past a static sensor rig
// with ground and a building wall, written out as a manifest directory.

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "ssc/pipeline.hpp"

namespace ssc::testing {

struct Box {
  double cx, cy, yaw;
  double length = 4.0, width = 2.0, height = 1.5;
  double base_z = -1.5;

  bool contains(const Point3& p, double pad = 0.0) const;
  /// Ray-box hit distance along unit `dir` from `o`, or < 0 for a miss.
  double hit(const Point3& o, const Point3& dir) const;
};

struct Scene {
  static constexpr int kFrames = 3;
  static constexpr double kGroundZ = -1.5;
  static constexpr double kWallX = 22.0;
  static constexpr LabelId kCar = 4, kRoad = 1, kBuilding = 3;

  CameraModel camera;
  std::vector<Pose> poses;  // world-from-sensor
  std::vector<TimeUs> times;

  Scene();
  /// The car in world coordinates at frame i.
  Box car(int frame) const;
  /// Sensor-frame LiDAR returns labelled with the true class. Frame 1 misses
  /// the car in both the scan and the image, so only the track recovers it.
  LabeledPointCloud scan(int frame) const;
  SemanticImage semantic(int frame) const;
  /// Sensor-frame voxels intersected by the car at frame i.
  std::set<std::size_t> footprint(int frame, const GridSpec& grid) const;
};

struct SceneFiles {
  std::filesystem::path manifest;
  std::filesystem::path tracks;
};

/// Writes one sequence per id into `dir` and a manifest covering all of them.
/// With `with_tracks`, each sequence gets the car's keyframes at frames 0
/// and 2.
SceneFiles write_scene(const std::filesystem::path& dir, const std::vector<std::string>& ids = {"synth"},
                       bool with_tracks = true);

/// Writes a manifest for a sequence with no frames.
std::filesystem::path write_empty_sequence(const std::filesystem::path& dir);

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& tag);

/// Chebyshev distance in voxels between two linear indices.
int voxel_distance(const GridSpec& g, std::size_t a, std::size_t b);

}  // namespace ssc::testing
