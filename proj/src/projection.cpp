#include "ssc/projection.hpp"

#include <cmath>

#include "ssc/error.hpp"

namespace ssc {

void CameraModel::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw ConfigError("camera focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ConfigError("camera dimensions must be positive");
  if (!(cx > 0 && cx < width) || !(cy > 0 && cy < height)) {
    throw ConfigError("camera principal point must lie inside the image");
  }
}

std::vector<PixelHit> project_to_image(const LabeledPointCloud& cloud, const CameraModel& cam) {
  cam.validate();
  std::vector<PixelHit> hits;
  hits.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point3 pc = cam.cam_from_lidar.apply(cloud.points[i]);
    if (!(pc.z() > 0.0)) continue;
    const double u = cam.fx * pc.x() / pc.z() + cam.cx;
    const double v = cam.fy * pc.y() / pc.z() + cam.cy;
    if (u < 0.0 || u >= cam.width || v < 0.0 || v >= cam.height) continue;
    hits.push_back({i, u, v, pc.z()});
  }
  return hits;
}

Point3 unproject(const CameraModel& cam, double u, double v, double depth) {
  return {(u - cam.cx) * depth / cam.fx, (v - cam.cy) * depth / cam.fy, depth};
}

namespace {

// Nearest pixel with round-half-up; u in [0, width) can round to width.
int nearest_pixel(double coord, int extent) {
  const int px = static_cast<int>(std::floor(coord + 0.5));
  return px >= extent ? extent - 1 : px;
}

}  // namespace

StaticDynamicSplit label_points(const LabeledPointCloud& cloud, const SemanticImage& img,
                                const CameraModel& cam, const LabelSet& labelset) {
  if (img.width != cam.width || img.height != cam.height) {
    throw ConfigError("semantic image " + std::to_string(img.width) + "x" +
                      std::to_string(img.height) + " does not match camera " +
                      std::to_string(cam.width) + "x" + std::to_string(cam.height));
  }
  if (img.label_ids.size() != static_cast<std::size_t>(img.width) * img.height) {
    throw ConfigError("semantic image raster size does not match its dimensions");
  }
  cloud.check_parallel();

  std::vector<LabelId> labels(cloud.size(), labelset.unknown_id());
  for (const auto& hit : project_to_image(cloud, cam)) {
    const LabelId id = img.at(nearest_pixel(hit.u, img.width), nearest_pixel(hit.v, img.height));
    labels[hit.point_index] = labelset.contains(id) ? id : labelset.unknown_id();
  }

  StaticDynamicSplit out;
  out.static_points.frame_time = cloud.frame_time;
  out.dynamic_points.frame_time = cloud.frame_time;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    auto& dst = labelset.is_dynamic(labels[i]) ? out.dynamic_points : out.static_points;
    dst.push_back(cloud.points[i], labels[i], cloud.stamps[i]);
  }
  return out;
}

AggregatedMaps accumulate_maps(const std::vector<StaticDynamicSplit>& frames,
                               const std::vector<Pose>& world_from_sensor) {
  if (frames.size() != world_from_sensor.size()) {
    throw ConfigError("accumulate_maps: " + std::to_string(frames.size()) + " frames but " +
                      std::to_string(world_from_sensor.size()) + " poses");
  }
  AggregatedMaps maps;
  std::size_t ns = 0, nd = 0;
  for (const auto& f : frames) {
    ns += f.static_points.size();
    nd += f.dynamic_points.size();
  }
  maps.static_map.reserve(ns);
  maps.dynamic_map.reserve(nd);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    maps.static_map.append(transform_points(frames[i].static_points, world_from_sensor[i]));
    maps.dynamic_map.append(transform_points(frames[i].dynamic_points, world_from_sensor[i]));
    maps.static_map.frame_time = frames[i].static_points.frame_time;
    maps.dynamic_map.frame_time = frames[i].dynamic_points.frame_time;
  }
  return maps;
}

}  // namespace ssc
