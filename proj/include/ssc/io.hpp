#pragma once

// On-disk formats. Binary formats are little-endian and start with a
// 4-byte magic and a u32 version; decoders reject other versions.
//
//   point cloud   "SSCP" v1, u64 count, count x {f32 x, y, z, intensity}
//                 (headerless KITTI-style .bin of the same records is also read)
//   labelled cloud "SSCL" v1, u64 count, i64 frame_time,
//                 count x {f64 x, y, z, u16 label, i64 stamp}
//   events        "SSCE" v1, u32 width, u32 height, u64 t_start, u64 t_end,
//                 then 13-byte records (u64 t, u16 x, u16 y, u8 polarity)
//   voxel grid    "SSCV" v1, u32 nx, ny, nz, f64 min[3], f64 max[3], f64 voxel,
//                 u16 labels[n], u8 mask[n]
//   semantic image raw u8 ids, row-major, with a "<path>.json" sidecar
//                 {"version": 1, "width": w, "height": h}
//   poses         text, one line per frame, 12 reals (row-major 3x4
//                 world-from-sensor); '#' lines are comments

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ssc/core.hpp"
#include "ssc/corrupt.hpp"
#include "ssc/events.hpp"
#include "ssc/projection.hpp"
#include "ssc/tracks.hpp"
#include "ssc/voxel.hpp"
#include <json.hpp>

namespace ssc::io {

namespace fs = std::filesystem;
using Bytes = std::vector<std::byte>;

inline constexpr std::uint32_t kFormatVersion = 1;

/// Throws LoadError naming the path when it cannot be read.
Bytes read_file(const fs::path& path);
std::string read_text(const fs::path& path);
/// Writes to a sibling temp file, flushes it to disk and renames over `path`.
void write_file_atomic(const fs::path& path, std::span<const std::byte> data);
void write_text_atomic(const fs::path& path, std::string_view text);

struct RawPoint {
  float x = 0, y = 0, z = 0, intensity = 0;
  bool operator==(const RawPoint&) const = default;
};

Bytes encode_points(std::span<const RawPoint> points);
std::vector<RawPoint> decode_points(std::span<const std::byte> data);
/// Unlabelled cloud with every label set to `label` and stamp `time`.
LabeledPointCloud to_cloud(std::span<const RawPoint> points, LabelId label, TimeUs time);

Bytes encode_labeled_cloud(const LabeledPointCloud& cloud);
LabeledPointCloud decode_labeled_cloud(std::span<const std::byte> data);

Bytes encode_event_file(const EventStream& stream);
EventStream decode_event_file(std::span<const std::byte> data);

Bytes encode_voxel_grid(const VoxelGrid& grid);
VoxelGrid decode_voxel_grid(std::span<const std::byte> data);

SemanticImage read_semantic_image(const fs::path& path);
void write_semantic_image(const fs::path& path, const SemanticImage& img);

std::vector<Pose> parse_poses(std::string_view text);
std::string format_poses(std::span<const Pose> poses);

/// Binary PPM (P6), 8-bit.
Image decode_ppm(std::span<const std::byte> data);
Bytes encode_ppm(const Image& img);

/// 8-bit PNG; `channels` is 1 (grey) or 3 (RGB).
Bytes encode_png(int width, int height, int channels, std::span<const std::uint8_t> pixels);

/// NumPy .npy (v1.0, '<f8', C order) of shape (channels, height, width).
Bytes encode_npy(const EventTensor& tensor);

nlohmann::json labelset_to_json(const LabelSet& labels);
LabelSet labelset_from_json(const nlohmann::json& j);

nlohmann::json camera_to_json(const CameraModel& cam);
CameraModel camera_from_json(const nlohmann::json& j);

/// {"version": 1, "tracks": [{"instance_id", "label", "keyframes": [{"time_us",
/// "x", "y", "yaw"}]}]}. Models are rebuilt from the map and never stored.
nlohmann::json tracks_to_json(std::span<const InstanceTrack> tracks);
std::vector<InstanceTrack> tracks_from_json(const nlohmann::json& j);
nlohmann::json pose_to_json(const TrackPose& p);

/// Parses JSON text, turning syntax errors into ValidationError.
nlohmann::json parse_json(std::string_view text, const std::string& what);

}  // namespace ssc::io
