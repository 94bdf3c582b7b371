#include "ssc/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <random>

#include "ssc/error.hpp"
#include "ssc/io.hpp"
#include "ssc/parallel.hpp"

namespace ssc {

// ---- config ----

void PipelineConfig::validate() const {
  if (!(grid.voxel > 0.0) || grid.cell_count() == 0) throw ConfigError("grid is empty");
  if (!(ground_epsilon > 0.0)) throw ConfigError("ground epsilon must be positive");
  if (ransac_iterations < 1) throw ConfigError("RANSAC iterations must be at least 1");
  if (!(points_per_cluster > 0.0)) throw ConfigError("points per cluster must be positive");
  if (kmeans_max_iters < 1) throw ConfigError("k-means iterations must be at least 1");
  if (!(tau_us > 0.0)) throw ConfigError("tau must be positive");
  if (hats_cell < 1) throw ConfigError("HATS cell must be at least 1");
  if (!(vehicle_radius >= 0.0) || !(human_radius >= 0.0)) {
    throw ConfigError("capture radii must be non-negative");
  }
  if (tie_break != "smallest-id") throw ConfigError("unsupported tie-break policy '" + tie_break + "'");
}

double PipelineConfig::capture_radius(LabelGroup group) const {
  return group == LabelGroup::kHuman ? human_radius : vehicle_radius;
}

namespace {

template <class F>
auto json_field(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

Point3 vec3(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw ConfigError("expected a 3-vector");
  return {v[0], v[1], v[2]};
}

}  // namespace

PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  json_field("config", [&] {
    if (j.value("version", 1) != 1) throw ConfigError("config: unsupported version");
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      c.grid = grid_from_bounds(vec3(g.at("min")), vec3(g.at("max")), g.at("voxel").get<double>());
    }
    if (j.contains("ground")) {
      c.ground_epsilon = j["ground"].value("epsilon", c.ground_epsilon);
      c.ransac_iterations = j["ground"].value("iterations", c.ransac_iterations);
    }
    if (j.contains("kmeans")) {
      c.points_per_cluster = j["kmeans"].value("points_per_cluster", c.points_per_cluster);
      c.kmeans_max_iters = j["kmeans"].value("max_iters", c.kmeans_max_iters);
    }
    if (j.contains("events")) {
      c.tau_us = j["events"].value("tau_us", c.tau_us);
      c.hats_cell = j["events"].value("hats_cell", c.hats_cell);
    }
    if (j.contains("capture_radius")) {
      c.vehicle_radius = j["capture_radius"].value("vehicle", c.vehicle_radius);
      c.human_radius = j["capture_radius"].value("human", c.human_radius);
    }
    c.seed = j.value("seed", c.seed);
    c.tie_break = j.value("tie_break", c.tie_break);
    const auto policy = j.value("dynamic_policy", std::string("replace"));
    if (policy == "replace") {
      c.dynamic_policy = DynamicPolicy::kReplace;
    } else if (policy == "merge") {
      c.dynamic_policy = DynamicPolicy::kMerge;
    } else {
      throw ConfigError("unknown dynamic_policy '" + policy + "'");
    }
    c.keep_orphans = j.value("keep_orphans", c.keep_orphans);
    return 0;
  });
  c.validate();
  return c;
}

nlohmann::json config_to_json(const PipelineConfig& c) {
  const auto& g = c.grid;
  nlohmann::ordered_json j{
      {"version", 1},
      {"grid",
       {{"min", {g.min_corner.x(), g.min_corner.y(), g.min_corner.z()}},
        {"max", {g.max_corner.x(), g.max_corner.y(), g.max_corner.z()}},
        {"voxel", g.voxel}}},
      {"ground", {{"epsilon", c.ground_epsilon}, {"iterations", c.ransac_iterations}}},
      {"kmeans", {{"points_per_cluster", c.points_per_cluster}, {"max_iters", c.kmeans_max_iters}}},
      {"events", {{"tau_us", c.tau_us}, {"hats_cell", c.hats_cell}}},
      {"capture_radius", {{"vehicle", c.vehicle_radius}, {"human", c.human_radius}}},
      {"seed", c.seed},
      {"tie_break", c.tie_break},
      {"dynamic_policy", c.dynamic_policy == DynamicPolicy::kMerge ? "merge" : "replace"},
      {"keep_orphans", c.keep_orphans}};
  return nlohmann::json::parse(j.dump());
}

// ---- manifest ----

const SequenceEntry& Manifest::sequence(const std::string& id) const {
  for (const auto& s : sequences) {
    if (s.id == id) return s;
  }
  throw ValidationError("no sequence '" + id + "' in manifest");
}

namespace {

fs::path resolve(const fs::path& root, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : root / path;
}

void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw LoadError("referenced file does not exist", p.string());
}

}  // namespace

Manifest manifest_from_json(const nlohmann::json& j, const fs::path& root) {
  Manifest m;
  m.root = root;
  auto fail = [](const std::string& msg) { throw ValidationError("manifest: " + msg); };
  try {
    if (j.at("version").get<int>() != 1) fail("unsupported version");
    for (const auto& s : j.at("sequences")) {
      SequenceEntry seq;
      seq.id = s.at("id").get<std::string>();
      if (seq.id.empty() || seq.id.find_first_of("/\\") != std::string::npos || seq.id == "." ||
          seq.id == "..") {
        fail("sequence id '" + seq.id + "' is not a plain name");
      }
      for (const auto& other : m.sequences) {
        if (other.id == seq.id) fail("duplicate sequence id '" + seq.id + "'");
      }
      seq.calibration = resolve(root, s.at("calibration").get<std::string>());
      seq.poses = resolve(root, s.at("poses").get<std::string>());
      if (s.contains("labelset")) seq.labelset = resolve(root, s["labelset"].get<std::string>());
      seq.tracks = resolve(root, s.value("tracks", seq.id + ".tracks.json"));
      for (const auto& f : s.at("frames")) {
        FrameEntry fe;
        fe.points = resolve(root, f.at("points").get<std::string>());
        fe.semantic = resolve(root, f.at("semantic").get<std::string>());
        if (f.contains("image")) fe.image = resolve(root, f["image"].get<std::string>());
        if (f.contains("events")) fe.events = resolve(root, f["events"].get<std::string>());
        fe.pose_index = f.at("pose_index").get<std::size_t>();
        const auto w = f.at("event_window").get<std::vector<std::uint64_t>>();
        if (w.size() != 2 || w[1] < w[0]) fail("event_window must be [t_start, t_end]");
        fe.t_start = w[0];
        fe.t_end = w[1];
        fe.time = f.value("time_us", static_cast<TimeUs>(fe.t_end));
        if (!seq.frames.empty() && fe.time < seq.frames.back().time) {
          fail("frames of sequence '" + seq.id + "' are not time-sorted");
        }
        seq.frames.push_back(std::move(fe));
      }
      m.sequences.push_back(std::move(seq));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(e.what());
  }
  for (const auto& seq : m.sequences) {
    require_file(seq.calibration);
    require_file(seq.poses);
    if (seq.labelset) require_file(*seq.labelset);
    for (const auto& f : seq.frames) {
      require_file(f.points);
      require_file(f.semantic);
      if (f.image) require_file(*f.image);
      if (f.events) require_file(*f.events);
    }
  }
  return m;
}

Manifest load_manifest(const fs::path& path) {
  const auto j = io::parse_json(io::read_text(path), path.string());
  return manifest_from_json(j, path.parent_path());
}

// ---- sequence loading ----

SequenceInputs load_sequence(const SequenceEntry& seq) {
  SequenceInputs in;
  if (seq.labelset) in.labels = io::labelset_from_json(io::parse_json(io::read_text(*seq.labelset), seq.labelset->string()));
  in.camera = io::camera_from_json(io::parse_json(io::read_text(seq.calibration), seq.calibration.string()));
  const auto all_poses = io::parse_poses(io::read_text(seq.poses));

  const std::size_t n = seq.frames.size();
  in.poses.reserve(n);
  in.times.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = seq.frames[i];
    if (f.pose_index >= all_poses.size()) {
      throw StageError("load", static_cast<long>(i),
                       "pose index " + std::to_string(f.pose_index) + " but " + seq.poses.string() +
                           " has " + std::to_string(all_poses.size()) + " poses");
    }
    in.poses.push_back(all_poses[f.pose_index]);
    in.times.push_back(f.time);
  }

  in.frames.resize(n);
  parallel_for(n, [&](std::size_t i) {
    const auto& f = seq.frames[i];
    try {
      const auto raw = io::decode_points(io::read_file(f.points));
      const auto cloud = io::to_cloud(raw, in.labels.unknown_id(), f.time);
      const auto img = io::read_semantic_image(f.semantic);
      for (auto id : img.label_ids) {
        if (!in.labels.contains(id)) {
          throw ValidationError(f.semantic.string() + ": label id " + std::to_string(id) +
                                " not in the label set");
        }
      }
      in.frames[i] = label_points(cloud, img, in.camera, in.labels);
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError("label_points", static_cast<long>(i), e.what());
    }
  });

  in.maps = accumulate_maps(in.frames, in.poses);
  if (fs::exists(seq.tracks)) {
    in.tracks = io::tracks_from_json(io::parse_json(io::read_text(seq.tracks), seq.tracks.string()));
    for (const auto& t : in.tracks) {
      if (!in.labels.is_dynamic(t.label)) {
        throw InvalidTrackError("track " + std::to_string(t.instance_id) + " has non-dynamic label " +
                                std::to_string(t.label));
      }
    }
  }
  return in;
}

// ---- composition ----

ComposedFrame compose_frame(const LabeledPointCloud& static_map,
                            const LabeledPointCloud& dynamic_map,
                            const std::vector<InstanceTrack>& tracks,
                            const std::optional<Plane>& ground, TimeUs time,
                            const PipelineConfig& config, const LabelSet& labels) {
  ComposedFrame out;
  out.world = static_map;
  out.world.frame_time = time;

  const TimeUs at[] = {time};
  std::vector<TrackPose> poses;
  std::vector<double> radii;
  for (const auto& t : tracks) {
    poses.push_back(interpolate_track(t, at).front());
    radii.push_back(config.capture_radius(labels.at(t.label).group));
  }

  for (std::size_t i = 0; i < dynamic_map.size(); ++i) {
    if (dynamic_map.stamps[i] != time) continue;
    const Point3& p = dynamic_map.points[i];
    bool claimed = false;
    for (std::size_t k = 0; k < poses.size() && !claimed; ++k) {
      claimed = std::hypot(p.x() - poses[k].x, p.y() - poses[k].y) < radii[k];
    }
    const bool keep = config.dynamic_policy == DynamicPolicy::kMerge || (!claimed && config.keep_orphans);
    if (keep) out.world.push_back(p, dynamic_map.labels[i], time);
  }

  for (std::size_t k = 0; k < tracks.size(); ++k) {
    const double gz = ground ? ground->height_at(poses[k].x, poses[k].y) : 0.0;
    const auto placed = place_object(tracks[k], poses[k], gz);
    out.placed_points += placed.size();
    out.world.append(placed);
  }
  out.world.frame_time = time;
  return out;
}

// ---- driver ----

std::size_t PipelineReport::frame_count() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.frames.size();
  return n;
}

nlohmann::json report_to_json(const PipelineReport& r) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["frames"] = r.frame_count();
  auto& seqs = j["sequences"] = nlohmann::ordered_json::array();
  for (const auto& s : r.sequences) {
    nlohmann::ordered_json sj;
    sj["id"] = s.id;
    sj["points"] = {{"static", s.static_points},
                    {"dynamic", s.dynamic_points},
                    {"ground", s.ground_points},
                    {"non_ground", s.non_ground_points}};
    if (s.ground) {
      const auto& n = s.ground->normal;
      sj["ground_plane"] = {{"normal", {n.x(), n.y(), n.z()}}, {"offset", s.ground->offset}};
    }
    auto& t = sj["timings_s"] = nlohmann::ordered_json::object();
    for (const auto& st : s.timings) t[st.stage] = st.seconds;
    auto& fr = sj["frames"] = nlohmann::ordered_json::array();
    for (const auto& f : s.frames) {
      fr.push_back({{"index", f.index},
                    {"time_us", f.time},
                    {"points", f.points},
                    {"placed_points", f.placed_points},
                    {"occupancy", f.occupancy},
                    {"file", f.file}});
    }
    seqs.push_back(std::move(sj));
  }
  return nlohmann::json::parse(j.dump());
}

namespace {

class StageClock {
 public:
  explicit StageClock(SequenceReport& r) : report_(r) {}
  template <class F>
  auto run(const std::string& stage, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    auto finish = [&] {
      report_.timings.push_back(
          {stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
    };
    try {
      if constexpr (std::is_void_v<decltype(f())>) {
        f();
        finish();
      } else {
        auto r = f();
        finish();
        return r;
      }
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(stage, -1, e.what());
    }
  }

 private:
  SequenceReport& report_;
};

std::string frame_file_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06zu.sscv", i);
  return buf;
}

SequenceReport run_sequence(const SequenceEntry& seq, const PipelineConfig& config,
                            const fs::path& dir) {
  SequenceReport rep;
  rep.id = seq.id;
  StageClock clock(rep);
  fs::create_directories(dir);

  const SequenceInputs in = clock.run("load", [&] { return load_sequence(seq); });
  rep.static_points = in.maps.static_map.size();
  rep.dynamic_points = in.maps.dynamic_map.size();
  const std::size_t n = seq.frames.size();
  if (n == 0) return rep;

  if (!in.maps.dynamic_map.empty() && in.tracks.empty()) {
    throw StageError("tracks", -1,
                     std::to_string(in.maps.dynamic_map.size()) +
                         " dynamic points but no annotated tracks in " + seq.tracks.string());
  }

  const GroundFit ground = clock.run("fit_ground", [&] {
    GroundFitParams p;
    p.epsilon = config.ground_epsilon;
    p.iterations = config.ransac_iterations;
    p.seed = config.seed;
    return fit_ground(in.maps.static_map, p);
  });
  rep.ground = ground.plane;
  rep.ground_points = ground.ground.size();
  rep.non_ground_points = ground.non_ground.size();

  const LabeledPointCloud static_map = clock.run("refine", [&] {
    NonGroundRefineParams p;
    p.points_per_cluster = config.points_per_cluster;
    p.max_iters = config.kmeans_max_iters;
    p.seed = config.seed;
    LabeledPointCloud m = ground.ground;
    m.append(refine_non_ground(ground.non_ground, in.labels.unknown_id(), p));
    return m;
  });

  const std::vector<InstanceTrack> tracks = clock.run("build_model", [&] {
    std::vector<InstanceTrack> out(in.tracks.size());
    parallel_for(in.tracks.size(), [&](std::size_t k) {
      BuildModelParams p;
      p.capture_radius = config.capture_radius(in.labels.at(in.tracks[k].label).group);
      p.ground = ground.plane;
      out[k] = build_model(in.maps.dynamic_map, in.tracks[k], p);
    });
    return out;
  });

  rep.frames.resize(n);
  clock.run("voxelize", [&] {
    parallel_for(n, [&](std::size_t i) {
      try {
        const auto composed = compose_frame(static_map, in.maps.dynamic_map, tracks, ground.plane,
                                            in.times[i], config, in.labels);
        const auto local = transform_points(composed.world, in.poses[i].inverse());
        const auto voted = vote_voxels(local, config.grid, in.labels.free_id(), in.labels.unknown_id());
        const auto grid = compute_visibility(voted, Point3::Zero(), in.labels.free_id());
        const std::string name = frame_file_name(i);
        io::write_file_atomic(dir / name, io::encode_voxel_grid(grid));

        std::size_t occupied = 0;
        for (auto l : grid.labels) occupied += l != in.labels.free_id();
        auto& fr = rep.frames[i];
        fr.index = i;
        fr.time = in.times[i];
        fr.points = local.size();
        fr.placed_points = composed.placed_points;
        fr.occupancy = static_cast<double>(occupied) / static_cast<double>(grid.labels.size());
        fr.file = seq.id + "/" + name;
      } catch (const StageError&) {
        throw;
      } catch (const std::exception& e) {
        throw StageError("voxelize", static_cast<long>(i), e.what());
      }
    });
  });
  return rep;
}

}  // namespace

PipelineReport run_pipeline(const Manifest& manifest, const PipelineConfig& config,
                            const fs::path& out_dir) {
  config.validate();
  fs::create_directories(out_dir);
  std::random_device rd;
  const fs::path staging = out_dir / (".staging-" + std::to_string(rd()) + std::to_string(rd()));
  fs::create_directory(staging);
  PipelineReport report;
  try {
    for (const auto& seq : manifest.sequences) {
      report.sequences.push_back(run_sequence(seq, config, staging / seq.id));
    }
    io::write_text_atomic(staging / "report.json", report_to_json(report).dump(2) + "\n");
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
  for (const auto& seq : manifest.sequences) {
    fs::remove_all(out_dir / seq.id);
    fs::rename(staging / seq.id, out_dir / seq.id);
  }
  fs::rename(staging / "report.json", out_dir / "report.json");
  fs::remove_all(staging);
  return report;
}

}  // namespace ssc
