// ssc: command-line front end for the label-generation toolkit.

#include <CLI11.hpp>

#include <csignal>
#include <iostream>

#include "ssc/corrupt.hpp"
#include "ssc/elm.hpp"
#include "ssc/error.hpp"
#include "ssc/events.hpp"
#include "ssc/io.hpp"
#include "ssc/metrics.hpp"
#include "ssc/parallel.hpp"
#include "ssc/pipeline.hpp"
#include "ssc/service.hpp"

namespace {

using namespace ssc;
using nlohmann::ordered_json;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int jobs = 0;

  PipelineConfig config() const {
    PipelineConfig c;
    if (!config_path.empty()) {
      c = config_from_json(io::parse_json(io::read_text(config_path), config_path));
    }
    if (seed) c.seed = *seed;
    return c;
  }
};

LabelSet load_labels(const std::string& path) {
  if (path.empty()) return default_labelset();
  return io::labelset_from_json(io::parse_json(io::read_text(path), path));
}

void print(const ordered_json& j) { std::cout << j.dump(2) << "\n"; }

ordered_json optional_json(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

std::vector<TimeUs> parse_times(const std::string& csv) {
  std::vector<TimeUs> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoll(tok));
  }
  return out;
}

AnnotationService* g_service = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic occupancy label generation toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Pipeline config JSON")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Override the config seed");
  app.add_option("--jobs", g.jobs, "Worker threads (default: all cores)")->check(CLI::NonNegativeNumber);

  // project
  std::string points, semantic, calib, labels_path, out_static, out_dynamic;
  TimeUs time = 0;
  auto* project = app.add_subcommand("project", "Transfer image labels to one LiDAR frame");
  project->add_option("--points", points)->required()->check(CLI::ExistingFile);
  project->add_option("--semantic", semantic)->required()->check(CLI::ExistingFile);
  project->add_option("--calib", calib)->required()->check(CLI::ExistingFile);
  project->add_option("--labelset", labels_path)->check(CLI::ExistingFile);
  project->add_option("--time", time, "Capture time (us)");
  project->add_option("--out-static", out_static)->required();
  project->add_option("--out-dynamic", out_dynamic)->required();

  // map
  std::string manifest_path, sequence_id;
  auto* map = app.add_subcommand("map", "Aggregate a sequence into static and dynamic maps");
  map->add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);
  map->add_option("--sequence", sequence_id)->required();
  map->add_option("--out-static", out_static)->required();
  map->add_option("--out-dynamic", out_dynamic)->required();

  // refine
  std::string in_cloud, out_path;
  auto* refine = app.add_subcommand("refine", "Ground fit and per-frame cluster relabelling of a static map");
  refine->add_option("--in", in_cloud)->required()->check(CLI::ExistingFile);
  refine->add_option("--out", out_path)->required();
  refine->add_option("--labelset", labels_path)->check(CLI::ExistingFile);

  // voxelize
  std::vector<double> sensor{0, 0, 0};
  bool no_visibility = false;
  auto* voxelize = app.add_subcommand("voxelize", "Vote a labelled cloud into the configured grid");
  voxelize->add_option("--in", in_cloud)->required()->check(CLI::ExistingFile);
  voxelize->add_option("--out", out_path)->required();
  voxelize->add_option("--labelset", labels_path)->check(CLI::ExistingFile);
  voxelize->add_option("--sensor", sensor, "Sensor position for visibility")->expected(3);
  voxelize->add_flag("--no-visibility", no_visibility);

  // tracks interp
  std::string tracks_path, times_csv;
  auto* tracks = app.add_subcommand("tracks", "Track utilities");
  tracks->require_subcommand(1);
  auto* interp = tracks->add_subcommand("interp", "Interpolate annotated tracks at given times");
  interp->add_option("--tracks", tracks_path)->required()->check(CLI::ExistingFile);
  interp->add_option("--times", times_csv, "Comma-separated times (us)")->required();

  // events raster
  std::string events_path, repr = "rasterized";
  auto* events = app.add_subcommand("events", "Event utilities");
  events->require_subcommand(1);
  auto* raster = events->add_subcommand("raster", "Build an event representation tensor (.npy)");
  raster->add_option("--events", events_path)->required()->check(CLI::ExistingFile);
  raster->add_option("--repr", repr)->check(CLI::IsMember({"rasterized", "frame", "timesurface", "hats"}));
  raster->add_option("--out", out_path)->required();
  bool hats_cells = false;
  raster->add_flag("--hats-per-cell", hats_cells, "One HATS value per cell instead of per pixel");

  // corrupt
  std::string in_image, mode = "motion_blur";
  int severity = 1;
  auto* corrupt = app.add_subcommand("corrupt", "Apply a robustness corruption to a PPM image");
  corrupt->add_option("--in", in_image)->required()->check(CLI::ExistingFile);
  corrupt->add_option("--out", out_path)->required();
  corrupt->add_option("--mode", mode)->check(CLI::IsMember({"motion_blur", "fog", "brightness", "darkness", "shot_noise"}));
  corrupt->add_option("--severity", severity)->check(CLI::Range(1, 5));

  // eval
  std::vector<std::string> preds, gts;
  auto* eval = app.add_subcommand("eval", "Score predicted voxel grids against ground truth");
  eval->add_option("--pred", preds)->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", gts)->required()->check(CLI::ExistingFile);
  eval->add_option("--labelset", labels_path)->check(CLI::ExistingFile);

  // elm check
  std::string op = "attention";
  int seeds = 10, n = 4, d = 3;
  auto* elm_cmd = app.add_subcommand("elm", "Event-aided lifting kernel utilities");
  elm_cmd->require_subcommand(1);
  auto* check = elm_cmd->add_subcommand("check", "Finite-difference gradient check");
  check->add_option("--op", op)->check(CLI::IsMember({"fuse_add", "attention", "elm_fuse", "deformable_query"}));
  check->add_option("--seeds", seeds)->check(CLI::PositiveNumber);
  check->add_option("--n", n)->check(CLI::Range(1, 32));
  check->add_option("--d", d)->check(CLI::Range(1, 16));

  // pipeline run
  std::string out_dir;
  auto* pipeline = app.add_subcommand("pipeline", "End-to-end label generation");
  pipeline->require_subcommand(1);
  auto* run = pipeline->add_subcommand("run", "Run every stage over a manifest");
  run->add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir)->required();

  // annotate serve
  std::string host = "127.0.0.1";
  int port = 8080;
  auto* annotate = app.add_subcommand("annotate", "Annotation service");
  annotate->require_subcommand(1);
  auto* serve = annotate->add_subcommand("serve", "Serve the BEV annotation API");
  serve->add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);
  serve->add_option("--host", host);
  serve->add_option("--port", port)->check(CLI::Range(0, 65535));

  CLI11_PARSE(app, argc, argv);
  set_jobs(g.jobs);

  try {
    const PipelineConfig config = g.config();

    if (*project) {
      const LabelSet labels = load_labels(labels_path);
      const auto cam = io::camera_from_json(io::parse_json(io::read_text(calib), calib));
      const auto cloud = io::to_cloud(io::decode_points(io::read_file(points)), labels.unknown_id(), time);
      const auto split = label_points(cloud, io::read_semantic_image(semantic), cam, labels);
      io::write_file_atomic(out_static, io::encode_labeled_cloud(split.static_points));
      io::write_file_atomic(out_dynamic, io::encode_labeled_cloud(split.dynamic_points));
      print({{"static", split.static_points.size()}, {"dynamic", split.dynamic_points.size()}});
    } else if (*map) {
      const auto manifest = load_manifest(manifest_path);
      const auto in = load_sequence(manifest.sequence(sequence_id));
      io::write_file_atomic(out_static, io::encode_labeled_cloud(in.maps.static_map));
      io::write_file_atomic(out_dynamic, io::encode_labeled_cloud(in.maps.dynamic_map));
      print({{"frames", in.frames.size()},
             {"static", in.maps.static_map.size()},
             {"dynamic", in.maps.dynamic_map.size()}});
    } else if (*refine) {
      const LabelSet labels = load_labels(labels_path);
      const auto cloud = io::decode_labeled_cloud(io::read_file(in_cloud));
      const auto fit = fit_ground(cloud, {config.ground_epsilon, config.ransac_iterations, config.seed});
      NonGroundRefineParams p;
      p.points_per_cluster = config.points_per_cluster;
      p.max_iters = config.kmeans_max_iters;
      p.seed = config.seed;
      LabeledPointCloud out = fit.ground;
      out.append(refine_non_ground(fit.non_ground, labels.unknown_id(), p));
      io::write_file_atomic(out_path, io::encode_labeled_cloud(out));
      const auto& nrm = fit.plane.normal;
      print({{"plane", {{"normal", {nrm.x(), nrm.y(), nrm.z()}}, {"offset", fit.plane.offset}}},
             {"ground", fit.ground.size()},
             {"non_ground", fit.non_ground.size()}});
    } else if (*voxelize) {
      const LabelSet labels = load_labels(labels_path);
      const auto cloud = io::decode_labeled_cloud(io::read_file(in_cloud));
      auto grid = vote_voxels(cloud, config.grid, labels.free_id(), labels.unknown_id());
      if (!no_visibility) {
        grid = compute_visibility(grid, Point3(sensor[0], sensor[1], sensor[2]), labels.free_id());
      }
      io::write_file_atomic(out_path, io::encode_voxel_grid(grid));
      std::size_t occupied = 0, occluded = 0;
      for (std::size_t k = 0; k < grid.labels.size(); ++k) {
        occupied += grid.labels[k] != labels.free_id();
        occluded += (grid.mask[k] & mask::kOccluded) != 0;
      }
      print({{"dims", grid.spec.dims}, {"occupied", occupied}, {"occluded", occluded}});
    } else if (*interp) {
      const auto all = io::tracks_from_json(io::parse_json(io::read_text(tracks_path), tracks_path));
      const auto times = parse_times(times_csv);
      ordered_json out = ordered_json::array();
      for (const auto& t : all) {
        ordered_json poses = ordered_json::array();
        for (const auto& p : interpolate_track(t, times)) poses.push_back(ordered_json(io::pose_to_json(p)));
        out.push_back({{"instance_id", t.instance_id}, {"poses", poses}});
      }
      print(out);
    } else if (*raster) {
      const auto stream = io::decode_event_file(io::read_file(events_path));
      RepresentationParams p;
      p.tau_us = config.tau_us;
      p.hats_cell = config.hats_cell;
      p.hats_broadcast = !hats_cells;
      const auto tensor = build_representation(stream, representation_from_name(repr), p);
      io::write_file_atomic(out_path, io::encode_npy(tensor));
      print({{"events", stream.events.size()},
             {"shape", {tensor.channels.size(), tensor.height, tensor.width}},
             {"channels", tensor.channels}});
    } else if (*corrupt) {
      const auto img = io::decode_ppm(io::read_file(in_image));
      const auto out = corrupt_image(img, corruption_from_name(mode), severity, config.seed);
      io::write_file_atomic(out_path, io::encode_ppm(out));
      print({{"mode", mode}, {"severity", severity}, {"seed", config.seed}, {"mean_in", img.mean()}, {"mean_out", out.mean()}});
    } else if (*eval) {
      if (preds.size() != gts.size()) throw ConfigError("--pred and --gt need the same number of files");
      const LabelSet labels = load_labels(labels_path);
      ConfusionMatrix cm(labels.id_bound());
      for (std::size_t i = 0; i < preds.size(); ++i) {
        cm = accumulate(io::decode_voxel_grid(io::read_file(preds[i])),
                        io::decode_voxel_grid(io::read_file(gts[i])), labels, std::move(cm));
      }
      const Scores s = scores(cm, labels);
      ordered_json per = ordered_json::object();
      for (const auto& c : s.per_class) per[labels.at(c.id).name] = optional_json(c.iou);
      print({{"iou", optional_json(s.iou)},
             {"precision", optional_json(s.precision)},
             {"recall", optional_json(s.recall)},
             {"miou", optional_json(s.miou)},
             {"per_class", per},
             {"evaluated_voxels", cm.total()},
             {"masked_voxels", cm.mask_skipped()}});
    } else if (*check) {
      elm::GradCheckShape shape;
      shape.n = n;
      shape.d = d;
      const auto which = elm::grad_check_op_from_name(op);
      double worst = 0.0;
      ordered_json per = ordered_json::array();
      for (int s = 0; s < seeds; ++s) {
        const double e = elm::grad_check(which, shape, config.seed + static_cast<std::uint64_t>(s));
        worst = std::max(worst, e);
        per.push_back(e);
      }
      print({{"op", op}, {"max_rel_error", worst}, {"per_seed", per}, {"pass", worst < 1e-5}});
      return worst < 1e-5 ? 0 : 1;
    } else if (*run) {
      const auto report = run_pipeline(load_manifest(manifest_path), config, out_dir);
      print(report_to_json(report));
    } else if (*serve) {
      AnnotationService service(load_manifest(manifest_path), config);
      const int bound = service.bind(host, port);
      std::cerr << "serving on http://" << host << ":" << bound << "\n";
      g_service = &service;
      std::signal(SIGINT, [](int) {
        if (g_service) g_service->stop();
      });
      service.serve();
      g_service = nullptr;
    }
  } catch (const ssc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
