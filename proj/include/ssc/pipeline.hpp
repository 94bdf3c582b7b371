#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ssc/core.hpp"
#include "ssc/projection.hpp"
#include "ssc/refine.hpp"
#include "ssc/tracks.hpp"
#include "ssc/voxel.hpp"
#include <json.hpp>

namespace ssc {

namespace fs = std::filesystem;

/// What happens to a frame's observed dynamic points once tracks are placed.
enum class DynamicPolicy {
  kReplace,  // points inside a track's capture radius are replaced by its model
  kMerge,    // observed points are kept alongside the placed model
};

struct PipelineConfig {
  GridSpec grid = dsec_grid();
  double ground_epsilon = 0.2;
  int ransac_iterations = 512;
  double points_per_cluster = 400.0;
  int kmeans_max_iters = 50;
  double tau_us = 50'000.0;
  int hats_cell = 8;
  double vehicle_radius = 3.0;
  double human_radius = 1.0;
  std::uint64_t seed = 0;
  /// Only "smallest-id" is implemented.
  std::string tie_break = "smallest-id";
  DynamicPolicy dynamic_policy = DynamicPolicy::kReplace;
  /// Keep dynamic points that no track claims (replace policy only).
  bool keep_orphans = false;

  /// Throws ConfigError on out-of-range fields.
  void validate() const;
  double capture_radius(LabelGroup group) const;
};

/// Missing keys keep their defaults.
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& c);

struct FrameEntry {
  fs::path points;
  fs::path semantic;
  std::optional<fs::path> image;
  std::optional<fs::path> events;
  std::size_t pose_index = 0;
  std::uint64_t t_start = 0, t_end = 0;  // event window, microseconds
  TimeUs time = 0;                        // capture time; defaults to t_end
};

struct SequenceEntry {
  std::string id;
  fs::path calibration;
  std::optional<fs::path> labelset;
  fs::path poses;
  /// Annotation file; may not exist yet when the sequence has no tracks.
  fs::path tracks;
  std::vector<FrameEntry> frames;
};

/// JSON: {"version": 1, "sequences": [{"id", "calibration", "poses",
/// "labelset"?, "tracks"?, "frames": [{"points", "semantic", "image"?,
/// "events"?, "pose_index", "event_window": [t0, t1], "time_us"?}]}]}.
/// Relative paths resolve against the manifest's directory.
struct Manifest {
  fs::path root;
  std::vector<SequenceEntry> sequences;

  const SequenceEntry& sequence(const std::string& id) const;
};

/// Throws LoadError naming the first referenced file that does not exist,
/// ValidationError on schema problems or unsorted frames.
Manifest load_manifest(const fs::path& path);
Manifest manifest_from_json(const nlohmann::json& j, const fs::path& root);

/// Everything derived from a sequence before per-frame composition.
struct SequenceInputs {
  LabelSet labels = default_labelset();
  CameraModel camera;
  std::vector<Pose> poses;  // world-from-sensor, one per frame
  std::vector<TimeUs> times;
  std::vector<StaticDynamicSplit> frames;  // sensor-frame clouds
  AggregatedMaps maps;                     // world frame
  std::vector<InstanceTrack> tracks;       // keyframes only
};

/// Loads and labels every frame of a sequence and aggregates the maps.
SequenceInputs load_sequence(const SequenceEntry& seq);

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct FrameReport {
  std::size_t index = 0;
  TimeUs time = 0;
  std::size_t points = 0;
  std::size_t placed_points = 0;
  double occupancy = 0.0;  // non-free fraction of the grid
  std::string file;
};

struct SequenceReport {
  std::string id;
  std::size_t static_points = 0, dynamic_points = 0;
  std::size_t ground_points = 0, non_ground_points = 0;
  std::optional<Plane> ground;
  std::vector<StageTiming> timings;
  std::vector<FrameReport> frames;
};

struct PipelineReport {
  std::vector<SequenceReport> sequences;
  std::size_t frame_count() const;
};

nlohmann::json report_to_json(const PipelineReport& r);

/// Per sequence, writes `<out>/<id>/frame_NNNNNN.sscv` plus `<out>/report.json`.
/// Output is staged in a temporary directory and moved into place only when
/// every stage succeeds; failures raise StageError and leave nothing behind.
PipelineReport run_pipeline(const Manifest& manifest, const PipelineConfig& config,
                            const fs::path& out_dir);

/// The per-frame world-frame cloud: refined static map, the frame's surviving
/// observed dynamic points and every track's model placed at that frame.
struct ComposedFrame {
  LabeledPointCloud world;
  std::size_t placed_points = 0;
};

/// `tracks` must carry built models. `dynamic_map` points stamped `time`
/// are the frame's observed dynamic points.
ComposedFrame compose_frame(const LabeledPointCloud& static_map,
                            const LabeledPointCloud& dynamic_map,
                            const std::vector<InstanceTrack>& tracks,
                            const std::optional<Plane>& ground, TimeUs time,
                            const PipelineConfig& config, const LabelSet& labels);

}  // namespace ssc
