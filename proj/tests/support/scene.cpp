#include "scene.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "ssc/io.hpp"

namespace ssc::testing {

namespace fs = std::filesystem;

namespace {

constexpr double kMaxRange = 40.0;
constexpr double kPi = 3.14159265358979323846;

Point3 to_box(const Box& b, const Point3& p) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double dx = p.x() - b.cx, dy = p.y() - b.cy;
  return {c * dx + s * dy, -s * dx + c * dy, p.z()};
}

}  // namespace

bool Box::contains(const Point3& p, double pad) const {
  const Point3 q = to_box(*this, p);
  return std::abs(q.x()) <= length / 2 + pad && std::abs(q.y()) <= width / 2 + pad &&
         q.z() >= base_z - pad && q.z() <= base_z + height + pad;
}

double Box::hit(const Point3& o, const Point3& dir) const {
  const Point3 lo(-length / 2, -width / 2, base_z), hi(length / 2, width / 2, base_z + height);
  const double c = std::cos(yaw), s = std::sin(yaw);
  const Point3 oo = to_box(*this, o);
  const Point3 d(c * dir.x() + s * dir.y(), -s * dir.x() + c * dir.y(), dir.z());
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (oo[a] < lo[a] || oo[a] > hi[a]) return -1.0;
      continue;
    }
    double ta = (lo[a] - oo[a]) / d[a], tb = (hi[a] - oo[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return -1.0;
  }
  return t0 > 0.0 ? t0 : -1.0;
}

Scene::Scene() {
  camera.fx = camera.fy = 300.0;
  camera.cx = 320.0;
  camera.cy = 240.0;
  camera.width = 640;
  camera.height = 480;
  Mat3 r;
  r << 0, -1, 0, 0, 0, -1, 1, 0, 0;
  camera.cam_from_lidar = Pose(r, Point3::Zero());
  for (int i = 0; i < kFrames; ++i) {
    poses.push_back(Pose::from_translation(Point3(0.5 * i, 0, 0)));
    times.push_back(100'000 * static_cast<TimeUs>(i));
  }
}

Box Scene::car(int frame) const { return Box{8.0 + frame, 3.0, 0.1 * frame}; }

namespace {

// Nearest surface along a sensor-frame ray; label 0 on a miss.
std::pair<double, LabelId> cast(const Scene& scene, int frame, const Point3& dir, bool with_car) {
  const double ego_x = scene.poses[frame].translation().x();
  double best = kMaxRange;
  LabelId label = 0;
  if (dir.z() < 0) {
    const double t = Scene::kGroundZ / dir.z();
    if (t < best) best = t, label = Scene::kRoad;
  }
  if (dir.x() > 0) {
    const double t = (Scene::kWallX - ego_x) / dir.x();
    const Point3 p = t * dir;
    if (t < best && p.z() >= Scene::kGroundZ && p.z() <= 3.0 && std::abs(p.y()) < 20.0) {
      best = t, label = Scene::kBuilding;
    }
  }
  if (with_car) {
    Box b = scene.car(frame);
    b.cx -= ego_x;
    const double t = b.hit(Point3::Zero(), dir);
    if (t > 0 && t < best) best = t, label = Scene::kCar;
  }
  return {best, label};
}

}  // namespace

LabeledPointCloud Scene::scan(int frame) const {
  LabeledPointCloud c;
  c.frame_time = times[frame];
  for (int ia = 0; ia < 900; ++ia) {
    const double az = (-180.0 + 0.4 * ia) * kPi / 180.0;
    for (int ie = 0; ie < 36; ++ie) {
      const double el = (-24.0 + 0.8 * ie) * kPi / 180.0;
      const Point3 dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
      const auto [t, label] = cast(*this, frame, dir, frame != 1);
      if (label == 0) continue;
      c.push_back(t * dir, label, times[frame]);
    }
  }
  return c;
}

SemanticImage Scene::semantic(int frame) const {
  SemanticImage img;
  img.width = camera.width;
  img.height = camera.height;
  img.label_ids.assign(static_cast<std::size_t>(img.width) * img.height, 255);
  const Mat3 lidar_from_cam = camera.cam_from_lidar.rotation().transpose();
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      const Point3 d_cam((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0);
      const Point3 dir = (lidar_from_cam * d_cam).normalized();
      const auto [t, label] = cast(*this, frame, dir, frame != 1);
      if (label != 0) img.label_ids[static_cast<std::size_t>(v) * img.width + u] = label;
    }
  }
  return img;
}

std::set<std::size_t> Scene::footprint(int frame, const GridSpec& grid) const {
  std::set<std::size_t> out;
  const Box b = car(frame);
  const Point3 ego = poses[frame].translation();
  const double step = 0.05;
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  for (double x = -b.length / 2; x <= b.length / 2 + 1e-9; x += step) {
    for (double y = -b.width / 2; y <= b.width / 2 + 1e-9; y += step) {
      for (double z = b.base_z; z <= b.base_z + b.height + 1e-9; z += step) {
        const Point3 w(b.cx + c * x - s * y, b.cy + s * x + c * y, z);
        if (auto idx = voxel_index(w - ego, grid)) out.insert(grid.linear(*idx));
      }
    }
  }
  return out;
}

fs::path temp_dir(const std::string& tag) {
  std::random_device rd;
  const fs::path p = fs::temp_directory_path() / ("ssc-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
  fs::create_directories(p);
  return p;
}

int voxel_distance(const GridSpec& g, std::size_t a, std::size_t b) {
  const auto ia = g.unlinear(a), ib = g.unlinear(b);
  int d = 0;
  for (int k = 0; k < 3; ++k) d = std::max(d, std::abs(ia[k] - ib[k]));
  return d;
}

SceneFiles write_scene(const fs::path& dir, const std::vector<std::string>& ids, bool with_tracks) {
  const Scene scene;
  SceneFiles files;
  files.manifest = dir / "manifest.json";
  nlohmann::json seqs = nlohmann::json::array();

  std::vector<SemanticImage> images;
  std::vector<io::Bytes> clouds;
  for (int i = 0; i < Scene::kFrames; ++i) {
    images.push_back(scene.semantic(i));
    const auto cloud = scene.scan(i);
    std::vector<io::RawPoint> raw;
    for (const auto& p : cloud.points) {
      raw.push_back({static_cast<float>(p.x()), static_cast<float>(p.y()), static_cast<float>(p.z()), 1.0f});
    }
    clouds.push_back(io::encode_points(raw));
  }

  for (const auto& id : ids) {
    const fs::path sd = dir / id;
    fs::create_directories(sd);
    io::write_text_atomic(sd / "calib.json", io::camera_to_json(scene.camera).dump(2));
    io::write_text_atomic(sd / "poses.txt", io::format_poses(scene.poses));
    nlohmann::json frames = nlohmann::json::array();
    for (int i = 0; i < Scene::kFrames; ++i) {
      const std::string stem = "frame_" + std::to_string(i);
      io::write_file_atomic(sd / (stem + ".bin"), clouds[i]);
      io::write_semantic_image(sd / (stem + ".sem"), images[i]);
      const auto t = static_cast<std::uint64_t>(scene.times[i]);
      frames.push_back({{"points", id + "/" + stem + ".bin"},
                        {"semantic", id + "/" + stem + ".sem"},
                        {"pose_index", i},
                        {"event_window", {t > 50'000 ? t - 50'000 : 0, t}},
                        {"time_us", scene.times[i]}});
    }
    if (with_tracks) {
      InstanceTrack t;
      t.instance_id = 1;
      t.label = Scene::kCar;
      for (int i : {0, 2}) {
        const Box b = scene.car(i);
        t.keyframes.push_back({scene.times[i], b.cx, b.cy, b.yaw});
      }
      const std::vector<InstanceTrack> tracks{t};
      io::write_text_atomic(sd / "tracks.json", io::tracks_to_json(tracks).dump(2));
    }
    files.tracks = sd / "tracks.json";
    seqs.push_back({{"id", id},
                    {"calibration", id + "/calib.json"},
                    {"poses", id + "/poses.txt"},
                    {"tracks", id + "/tracks.json"},
                    {"frames", frames}});
  }
  io::write_text_atomic(files.manifest, nlohmann::json{{"version", 1}, {"sequences", seqs}}.dump(2));
  return files;
}

fs::path write_empty_sequence(const fs::path& dir) {
  const Scene scene;
  fs::create_directories(dir / "empty");
  io::write_text_atomic(dir / "empty" / "calib.json", io::camera_to_json(scene.camera).dump(2));
  io::write_text_atomic(dir / "empty" / "poses.txt", "");
  const nlohmann::json seq{{"id", "empty"},
                           {"calibration", "empty/calib.json"},
                           {"poses", "empty/poses.txt"},
                           {"frames", nlohmann::json::array()}};
  const fs::path m = dir / "manifest.json";
  io::write_text_atomic(m, nlohmann::json{{"version", 1}, {"sequences", {seq}}}.dump(2));
  return m;
}

}  // namespace ssc::testing
