#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ssc/core.hpp"
#include "ssc/refine.hpp"

namespace ssc {

struct BevSpec {
  double origin_x = 0.0, origin_y = 0.0;  // metric corner of cell (0, 0)
  double cell = 0.2;
  int width = 0, height = 0;

  void validate() const;
  /// Cell containing (x, y), or nullopt outside the raster.
  std::optional<std::pair<int, int>> cell_of(double x, double y) const;
  std::pair<double, double> cell_center(int cx, int cy) const;
};

/// Top-down occupancy of an aggregated dynamic map, where moving objects
/// show up as elongated trails.
struct BevRaster {
  BevSpec spec;
  std::vector<std::uint32_t> counts;  // row-major, cy * width + cx
  std::vector<LabelId> dominant;

  std::uint32_t count(int cx, int cy) const { return counts[static_cast<std::size_t>(cy) * spec.width + cx]; }
  LabelId label(int cx, int cy) const { return dominant[static_cast<std::size_t>(cy) * spec.width + cx]; }
};

/// Dominant label is the per-cell majority (ties to the smaller id);
/// empty cells carry `empty_label`.
BevRaster rasterize_bev(const LabeledPointCloud& dynamic_map, const BevSpec& spec,
                        LabelId empty_label = 0);

/// Smallest raster covering every point of the cloud with a one-cell margin.
BevSpec bev_spec_covering(const LabeledPointCloud& cloud, double cell);

/// Wraps into (-pi, pi].
double normalize_yaw(double yaw);

struct Keyframe {
  TimeUs time = 0;
  double x = 0.0, y = 0.0;
  double yaw = 0.0;
};

using TrackPose = Keyframe;

struct InstanceTrack {
  std::uint32_t instance_id = 0;
  LabelId label = 0;
  std::vector<Keyframe> keyframes;
  /// Object-canonical points: centroid at the origin, heading along +x.
  LabeledPointCloud model;
  /// Height of the model origin above the ground plane.
  double base_height = 0.0;

  /// Throws InvalidTrackError on empty/unsorted keyframes. Checks the model
  /// only when `require_model`.
  void validate(bool require_model) const;
};

/// Linear in x/y, shortest-arc in yaw (via unit-vector interpolation),
/// clamped outside the keyframe range. Keyframe times return the keyframe.
std::vector<TrackPose> interpolate_keyframes(std::span<const Keyframe> keyframes,
                                             std::span<const TimeUs> times);

std::vector<TrackPose> interpolate_track(const InstanceTrack& track, std::span<const TimeUs> times);

/// Rotates the model by `at.yaw` about z, then translates to (at.x, at.y,
/// ground_z + base_height). Every point gets the track label and `at.time`.
LabeledPointCloud place_object(const InstanceTrack& track, const TrackPose& at, double ground_z = 0.0);

double default_capture_radius(LabelGroup group);

struct BuildModelParams {
  double capture_radius = 3.0;
  /// When set, model heights are taken relative to this ground plane.
  std::optional<Plane> ground;
};

/// Gathers dynamic-map points within the capture radius (in x/y) of the
/// draft's pose at each point's capture time, maps them into the object
/// frame and recentres the merged model. The returned keyframes are shifted
/// by the recentring offset so placing the model at them reproduces the
/// captured points. Throws EmptyModelError when nothing is captured.
InstanceTrack build_model(const LabeledPointCloud& dynamic_map, const InstanceTrack& draft,
                          const BuildModelParams& params);

}  // namespace ssc
