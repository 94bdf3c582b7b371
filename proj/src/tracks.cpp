#include "ssc/tracks.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "ssc/error.hpp"

namespace ssc {

void BevSpec::validate() const {
  if (!(cell > 0.0)) throw ConfigError("BEV cell size must be positive");
  if (width <= 0 || height <= 0) throw ConfigError("BEV raster dimensions must be positive");
}

std::optional<std::pair<int, int>> BevSpec::cell_of(double x, double y) const {
  const double fx = std::floor((x - origin_x) / cell);
  const double fy = std::floor((y - origin_y) / cell);
  if (!(fx >= 0.0 && fx < width && fy >= 0.0 && fy < height)) return std::nullopt;
  return std::pair{static_cast<int>(fx), static_cast<int>(fy)};
}

std::pair<double, double> BevSpec::cell_center(int cx, int cy) const {
  return {origin_x + (cx + 0.5) * cell, origin_y + (cy + 0.5) * cell};
}

BevRaster rasterize_bev(const LabeledPointCloud& dynamic_map, const BevSpec& spec,
                        LabelId empty_label) {
  spec.validate();
  dynamic_map.check_parallel();
  const std::size_t n = static_cast<std::size_t>(spec.width) * spec.height;
  BevRaster r{spec, std::vector<std::uint32_t>(n, 0), std::vector<LabelId>(n, empty_label)};
  std::map<std::size_t, std::map<LabelId, std::uint32_t>> per_cell;
  for (std::size_t i = 0; i < dynamic_map.size(); ++i) {
    const auto& p = dynamic_map.points[i];
    if (const auto c = spec.cell_of(p.x(), p.y())) {
      const auto k = static_cast<std::size_t>(c->second) * spec.width + c->first;
      ++r.counts[k];
      ++per_cell[k][dynamic_map.labels[i]];
    }
  }
  for (const auto& [k, tally] : per_cell) {
    std::uint32_t best = 0;
    for (const auto& [id, count] : tally) {
      if (count > best) {
        best = count;
        r.dominant[k] = id;
      }
    }
  }
  return r;
}

BevSpec bev_spec_covering(const LabeledPointCloud& cloud, double cell) {
  if (!(cell > 0.0)) throw ConfigError("BEV cell size must be positive");
  BevSpec spec;
  spec.cell = cell;
  if (cloud.empty()) {
    spec.origin_x = spec.origin_y = -cell;
    spec.width = spec.height = 2;
    return spec;
  }
  double x0 = cloud.points[0].x(), x1 = x0, y0 = cloud.points[0].y(), y1 = y0;
  for (const auto& p : cloud.points) {
    x0 = std::min(x0, p.x());
    x1 = std::max(x1, p.x());
    y0 = std::min(y0, p.y());
    y1 = std::max(y1, p.y());
  }
  spec.origin_x = std::floor(x0 / cell) * cell - cell;
  spec.origin_y = std::floor(y0 / cell) * cell - cell;
  spec.width = static_cast<int>(std::floor((x1 - spec.origin_x) / cell)) + 2;
  spec.height = static_cast<int>(std::floor((y1 - spec.origin_y) / cell)) + 2;
  return spec;
}

double normalize_yaw(double yaw) {
  constexpr double kPi = std::numbers::pi;
  double y = std::remainder(yaw, 2.0 * kPi);  // [-pi, pi]
  if (y <= -kPi) y += 2.0 * kPi;
  return y;
}

void InstanceTrack::validate(bool require_model) const {
  if (keyframes.empty()) {
    throw InvalidTrackError("track " + std::to_string(instance_id) + " has no keyframes");
  }
  for (std::size_t i = 1; i < keyframes.size(); ++i) {
    if (keyframes[i].time <= keyframes[i - 1].time) {
      throw InvalidTrackError("track " + std::to_string(instance_id) +
                              " keyframes are not strictly increasing in time");
    }
  }
  for (const auto& k : keyframes) {
    if (!std::isfinite(k.x) || !std::isfinite(k.y) || !std::isfinite(k.yaw)) {
      throw InvalidTrackError("track " + std::to_string(instance_id) + " has a non-finite keyframe");
    }
  }
  if (require_model && model.empty()) {
    throw InvalidTrackError("track " + std::to_string(instance_id) + " has an empty model");
  }
}

namespace {

TrackPose interpolate_at(std::span<const Keyframe> kf, TimeUs t) {
  auto normalized = [t](const Keyframe& k) { return TrackPose{t, k.x, k.y, normalize_yaw(k.yaw)}; };
  if (t <= kf.front().time) return normalized(kf.front());
  if (t >= kf.back().time) return normalized(kf.back());
  const auto hi = std::upper_bound(kf.begin(), kf.end(), t,
                                   [](TimeUs v, const Keyframe& k) { return v < k.time; });
  const Keyframe& b = *hi;
  const Keyframe& a = *(hi - 1);
  if (t == a.time) return normalized(a);
  const double alpha = static_cast<double>(t - a.time) / static_cast<double>(b.time - a.time);

  TrackPose out;
  out.time = t;
  out.x = a.x + alpha * (b.x - a.x);
  out.y = a.y + alpha * (b.y - a.y);
  const double c = (1.0 - alpha) * std::cos(a.yaw) + alpha * std::cos(b.yaw);
  const double s = (1.0 - alpha) * std::sin(a.yaw) + alpha * std::sin(b.yaw);
  if (std::hypot(c, s) > 1e-12) {
    out.yaw = normalize_yaw(std::atan2(s, c));
  } else {
    // Antipodal headings: the unit-vector path passes through the origin.
    out.yaw = normalize_yaw(a.yaw + alpha * normalize_yaw(b.yaw - a.yaw));
  }
  return out;
}

}  // namespace

std::vector<TrackPose> interpolate_keyframes(std::span<const Keyframe> keyframes,
                                             std::span<const TimeUs> times) {
  InstanceTrack probe;
  probe.keyframes.assign(keyframes.begin(), keyframes.end());
  probe.validate(false);
  std::vector<TrackPose> out;
  out.reserve(times.size());
  for (const auto t : times) out.push_back(interpolate_at(keyframes, t));
  return out;
}

std::vector<TrackPose> interpolate_track(const InstanceTrack& track, std::span<const TimeUs> times) {
  return interpolate_keyframes(track.keyframes, times);
}

LabeledPointCloud place_object(const InstanceTrack& track, const TrackPose& at, double ground_z) {
  const Pose pose = Pose::from_yaw(at.yaw, {at.x, at.y, ground_z + track.base_height});
  LabeledPointCloud out;
  out.frame_time = at.time;
  out.reserve(track.model.size());
  for (const auto& p : track.model.points) out.push_back(pose.apply(p), track.label, at.time);
  return out;
}

double default_capture_radius(LabelGroup group) {
  return group == LabelGroup::kHuman ? 1.0 : 3.0;
}

InstanceTrack build_model(const LabeledPointCloud& dynamic_map, const InstanceTrack& draft,
                          const BuildModelParams& params) {
  draft.validate(false);
  dynamic_map.check_parallel();
  if (!(params.capture_radius >= 0.0)) throw ConfigError("capture radius must be non-negative");

  std::map<TimeUs, TrackPose> pose_at;
  std::vector<Point3> canonical;
  for (std::size_t i = 0; i < dynamic_map.size(); ++i) {
    const TimeUs t = dynamic_map.stamps[i];
    auto it = pose_at.find(t);
    if (it == pose_at.end()) it = pose_at.emplace(t, interpolate_at(draft.keyframes, t)).first;
    const TrackPose& pose = it->second;
    const Point3& p = dynamic_map.points[i];
    const double dx = p.x() - pose.x;
    const double dy = p.y() - pose.y;
    if (!(std::hypot(dx, dy) < params.capture_radius)) continue;
    const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
    const double base = params.ground ? params.ground->height_at(pose.x, pose.y) : 0.0;
    canonical.emplace_back(c * dx + s * dy, -s * dx + c * dy, p.z() - base);
  }
  if (canonical.empty()) {
    throw EmptyModelError("track " + std::to_string(draft.instance_id) +
                          ": no dynamic points inside capture radius " +
                          std::to_string(params.capture_radius) + " m");
  }

  Point3 centroid = Point3::Zero();
  for (const auto& q : canonical) centroid += q;
  centroid /= static_cast<double>(canonical.size());

  InstanceTrack out = draft;
  out.base_height = centroid.z();
  out.model = LabeledPointCloud{};
  out.model.reserve(canonical.size());
  for (const auto& q : canonical) out.model.push_back(q - centroid, draft.label, 0);
  for (auto& k : out.keyframes) {
    const double c = std::cos(k.yaw), s = std::sin(k.yaw);
    k.x += c * centroid.x() - s * centroid.y();
    k.y += s * centroid.x() + c * centroid.y();
  }
  return out;
}

}  // namespace ssc
