#include "ssc/io.hpp"

#include <png.h>
#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <Eigen/SVD>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "bytes.hpp"
#include "ssc/error.hpp"

namespace ssc::io {

namespace {

constexpr std::string_view kPointMagic = "SSCP";
constexpr std::string_view kCloudMagic = "SSCL";
constexpr std::string_view kEventMagic = "SSCE";
constexpr std::string_view kGridMagic = "SSCV";

void expect_header(bytes::Reader& r, std::string_view magic) {
  if (!r.has_magic(magic)) throw ParseError("missing '" + std::string(magic) + "' magic", 0);
  r.skip(magic.size());
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion) {
    throw ParseError("unsupported " + std::string(magic) + " version " + std::to_string(version),
                     magic.size());
  }
}

void put_header(bytes::Writer& w, std::string_view magic) {
  w.put_magic(magic);
  w.put(kFormatVersion);
}

void expect_end(const bytes::Reader& r) {
  if (r.remaining() != 0) throw ParseError("trailing bytes", r.pos());
}

// Count fields are checked against the bytes left so a corrupt header cannot
// trigger a huge allocation.
std::size_t checked_count(bytes::Reader& r, std::uint64_t count, std::size_t record) {
  if (count > r.remaining() / record) throw ParseError("record count exceeds data", r.pos());
  return static_cast<std::size_t>(count);
}

std::span<const std::byte> as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::byte*>(s.data()), s.size()};
}

}  // namespace

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open file", path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw LoadError("read failed", path.string());
  Bytes out(buf.size());
  std::memcpy(out.data(), buf.data(), buf.size());
  return out;
}

std::string read_text(const fs::path& path) {
  const Bytes b = read_file(path);
  return {reinterpret_cast<const char*>(b.data()), b.size()};
}

void write_file_atomic(const fs::path& path, std::span<const std::byte> data) {
  thread_local std::mt19937_64 rng(std::random_device{}());
  fs::path tmp = path;
  tmp += ".tmp" + std::to_string(rng());
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw LoadError("cannot create file", tmp.string());
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      ::unlink(tmp.c_str());
      throw LoadError("write failed", tmp.string());
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0 || ::close(fd) != 0) {
    ::unlink(tmp.c_str());
    throw LoadError("flush failed", tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    ::unlink(tmp.c_str());
    throw LoadError("rename failed (" + ec.message() + ")", path.string());
  }
  const fs::path parent = path.has_parent_path() ? path.parent_path() : fs::path(".");
  const int dfd = ::open(parent.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (dfd >= 0) {
    ::fsync(dfd);
    ::close(dfd);
  }
}

void write_text_atomic(const fs::path& path, std::string_view text) {
  write_file_atomic(path, as_bytes(text));
}

// ---- point clouds ----

Bytes encode_points(std::span<const RawPoint> points) {
  bytes::Writer w(16 + points.size() * 16);
  put_header(w, kPointMagic);
  w.put(static_cast<std::uint64_t>(points.size()));
  for (const auto& p : points) {
    w.put(p.x);
    w.put(p.y);
    w.put(p.z);
    w.put(p.intensity);
  }
  return w.take();
}

std::vector<RawPoint> decode_points(std::span<const std::byte> data) {
  bytes::Reader r(data);
  std::size_t n = 0;
  if (r.has_magic(kPointMagic)) {
    expect_header(r, kPointMagic);
    n = checked_count(r, r.get<std::uint64_t>(), 16);
  } else {
    if (data.size() % 16 != 0) throw ParseError("headerless point file is not a multiple of 16 bytes", data.size() / 16 * 16);
    n = data.size() / 16;
  }
  std::vector<RawPoint> out(n);
  for (auto& p : out) {
    p.x = r.get<float>();
    p.y = r.get<float>();
    p.z = r.get<float>();
    p.intensity = r.get<float>();
  }
  expect_end(r);
  return out;
}

LabeledPointCloud to_cloud(std::span<const RawPoint> points, LabelId label, TimeUs time) {
  LabeledPointCloud c;
  c.reserve(points.size());
  c.frame_time = time;
  for (const auto& p : points) {
    const Point3 q(p.x, p.y, p.z);
    if (!q.allFinite()) continue;
    c.push_back(q, label, time);
  }
  return c;
}

Bytes encode_labeled_cloud(const LabeledPointCloud& cloud) {
  cloud.check_parallel();
  bytes::Writer w(24 + cloud.size() * 34);
  put_header(w, kCloudMagic);
  w.put(static_cast<std::uint64_t>(cloud.size()));
  w.put(cloud.frame_time);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int a = 0; a < 3; ++a) w.put(cloud.points[i][a]);
    w.put(cloud.labels[i]);
    w.put(cloud.stamps[i]);
  }
  return w.take();
}

LabeledPointCloud decode_labeled_cloud(std::span<const std::byte> data) {
  bytes::Reader r(data);
  expect_header(r, kCloudMagic);
  const auto count = r.get<std::uint64_t>();
  LabeledPointCloud c;
  c.frame_time = r.get<std::int64_t>();
  const std::size_t n = checked_count(r, count, 34);
  c.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Point3 p;
    for (int a = 0; a < 3; ++a) p[a] = r.get<double>();
    const auto label = r.get<LabelId>();
    c.push_back(p, label, r.get<std::int64_t>());
  }
  expect_end(r);
  return c;
}

// ---- events ----

Bytes encode_event_file(const EventStream& stream) {
  bytes::Writer w;
  put_header(w, kEventMagic);
  w.put(static_cast<std::uint32_t>(stream.width));
  w.put(static_cast<std::uint32_t>(stream.height));
  w.put(stream.t_start);
  w.put(stream.t_end);
  Bytes out = w.take();
  const Bytes records = encode_event_records(stream.events);
  out.insert(out.end(), records.begin(), records.end());
  return out;
}

EventStream decode_event_file(std::span<const std::byte> data) {
  bytes::Reader r(data);
  expect_header(r, kEventMagic);
  const auto w = r.get<std::uint32_t>();
  const auto h = r.get<std::uint32_t>();
  const auto t0 = r.get<std::uint64_t>();
  const auto t1 = r.get<std::uint64_t>();
  if (w == 0 || h == 0 || w > 65536 || h > 65536) throw ParseError("bad event sensor size", 8);
  const std::size_t header = r.pos();
  try {
    return parse_events(r.rest(), static_cast<int>(w), static_cast<int>(h), std::pair{t0, t1});
  } catch (const ParseError& e) {
    throw ParseError(std::string(e.what()) + " (record payload)", header + e.offset());
  }
}

// ---- voxel grids ----

Bytes encode_voxel_grid(const VoxelGrid& grid) {
  const auto& s = grid.spec;
  if (grid.labels.size() != s.cell_count() || grid.mask.size() != s.cell_count()) {
    throw ShapeError("voxel grid storage does not match its dimensions");
  }
  bytes::Writer w(68 + s.cell_count() * 3);
  put_header(w, kGridMagic);
  for (int a = 0; a < 3; ++a) w.put(static_cast<std::uint32_t>(s.dims[a]));
  for (int a = 0; a < 3; ++a) w.put(s.min_corner[a]);
  for (int a = 0; a < 3; ++a) w.put(s.max_corner[a]);
  w.put(s.voxel);
  for (auto l : grid.labels) w.put(l);
  for (auto m : grid.mask) w.put(m);
  return w.take();
}

VoxelGrid decode_voxel_grid(std::span<const std::byte> data) {
  bytes::Reader r(data);
  expect_header(r, kGridMagic);
  GridSpec s;
  std::uint64_t cells = 1;
  for (int a = 0; a < 3; ++a) {
    const auto d = r.get<std::uint32_t>();
    if (d == 0 || d > (1u << 16)) throw ParseError("bad grid dimension", r.pos() - 4);
    s.dims[a] = static_cast<int>(d);
    cells *= d;
  }
  for (int a = 0; a < 3; ++a) s.min_corner[a] = r.get<double>();
  for (int a = 0; a < 3; ++a) s.max_corner[a] = r.get<double>();
  s.voxel = r.get<double>();
  if (!(s.voxel > 0.0) || !s.min_corner.allFinite() || !s.max_corner.allFinite()) {
    throw ParseError("bad grid bounds", 20);
  }
  const std::size_t n = checked_count(r, cells, 3);
  VoxelGrid g;
  g.spec = s;
  g.labels.resize(n);
  g.mask.resize(n);
  for (auto& l : g.labels) l = r.get<LabelId>();
  for (auto& m : g.mask) m = r.get<std::uint8_t>();
  expect_end(r);
  return g;
}

// ---- semantic images ----

SemanticImage read_semantic_image(const fs::path& path) {
  fs::path sidecar = path;
  sidecar += ".json";
  const auto meta = parse_json(read_text(sidecar), sidecar.string());
  SemanticImage img;
  try {
    if (meta.at("version").get<int>() != 1) throw LoadError("unsupported semantic image version", sidecar.string());
    img.width = meta.at("width").get<int>();
    img.height = meta.at("height").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("bad semantic image sidecar (") + e.what() + ")", sidecar.string());
  }
  if (img.width <= 0 || img.height <= 0) throw LoadError("bad semantic image size", sidecar.string());
  const Bytes raw = read_file(path);
  if (raw.size() != static_cast<std::size_t>(img.width) * img.height) {
    throw LoadError("semantic image size does not match its sidecar", path.string());
  }
  img.label_ids.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) img.label_ids[i] = std::to_integer<std::uint8_t>(raw[i]);
  return img;
}

void write_semantic_image(const fs::path& path, const SemanticImage& img) {
  if (img.label_ids.size() != static_cast<std::size_t>(img.width) * img.height) {
    throw ShapeError("semantic image storage does not match its size");
  }
  Bytes raw(img.label_ids.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (img.label_ids[i] > 255) throw ShapeError("label id does not fit in 8 bits");
    raw[i] = static_cast<std::byte>(img.label_ids[i]);
  }
  write_file_atomic(path, raw);
  fs::path sidecar = path;
  sidecar += ".json";
  nlohmann::ordered_json meta{{"version", 1}, {"width", img.width}, {"height", img.height}};
  write_text_atomic(sidecar, meta.dump(2) + "\n");
}

// ---- poses ----

std::vector<Pose> parse_poses(std::string_view text) {
  std::vector<Pose> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double v[12];
    for (double& x : v) {
      if (!(ls >> x)) throw ValidationError("pose line " + std::to_string(lineno) + ": expected 12 numbers");
    }
    std::string extra;
    if (ls >> extra) throw ValidationError("pose line " + std::to_string(lineno) + ": more than 12 values");
    Mat3 r;
    Point3 t;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) r(i, j) = v[i * 4 + j];
      t[i] = v[i * 4 + 3];
    }
    // Text round-trips lose a few ulps; snap near-rotations back onto SO(3).
    if (!is_valid_rotation(r) && is_valid_rotation(r, 1e-6)) {
      Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
      r = svd.matrixU() * svd.matrixV().transpose();
    }
    try {
      out.emplace_back(r, t);
    } catch (const InvalidPoseError& e) {
      throw InvalidPoseError("pose line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string format_poses(std::span<const Pose> poses) {
  std::string out;
  char buf[32];
  for (const auto& p : poses) {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 4; ++j) {
        const double x = j < 3 ? p.rotation()(i, j) : p.translation()[i];
        std::snprintf(buf, sizeof buf, "%.17g", x);
        if (!out.empty() && out.back() != '\n') out += ' ';
        out += buf;
      }
    }
    out += '\n';
  }
  return out;
}

// ---- images ----

namespace {

// Skips whitespace and '#' comments between PPM header tokens.
int ppm_token(bytes::Reader& r) {
  for (;;) {
    r.need(1);
    const auto c = static_cast<char>(r.rest()[0]);
    if (c == '#') {
      while (r.remaining() && static_cast<char>(r.rest()[0]) != '\n') r.skip(1);
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      r.skip(1);
    } else {
      break;
    }
  }
  long v = 0;
  int digits = 0;
  while (r.remaining() && std::isdigit(static_cast<unsigned char>(static_cast<char>(r.rest()[0])))) {
    v = v * 10 + (static_cast<char>(r.rest()[0]) - '0');
    if (v > 1'000'000) throw ParseError("PPM header value too large", r.pos());
    r.skip(1);
    ++digits;
  }
  if (!digits) throw ParseError("expected a number in PPM header", r.pos());
  return static_cast<int>(v);
}

}  // namespace

Image decode_ppm(std::span<const std::byte> data) {
  bytes::Reader r(data);
  if (!r.has_magic("P6")) throw ParseError("not a binary PPM (P6)", 0);
  r.skip(2);
  const int w = ppm_token(r), h = ppm_token(r), maxval = ppm_token(r);
  if (w <= 0 || h <= 0) throw ParseError("bad PPM size", r.pos());
  if (maxval != 255) throw ParseError("only 8-bit PPM is supported", r.pos());
  r.skip(1);  // single whitespace before the raster
  const std::size_t n = static_cast<std::size_t>(w) * h * 3;
  if (r.remaining() < n) throw ParseError("truncated PPM raster", r.pos());
  Image img = Image::filled(w, h, 0.0);
  const auto px = r.rest();
  for (std::size_t i = 0; i < n; ++i) img.data[i] = std::to_integer<std::uint8_t>(px[i]) / 255.0;
  return img;
}

Bytes encode_ppm(const Image& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  Bytes out(header.size() + img.data.size());
  std::memcpy(out.data(), header.data(), header.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double v = std::clamp(img.data[i], 0.0, 1.0);
    out[header.size() + i] = static_cast<std::byte>(static_cast<std::uint8_t>(std::lround(v * 255.0)));
  }
  return out;
}

Bytes encode_png(int width, int height, int channels, std::span<const std::uint8_t> pixels) {
  if (width <= 0 || height <= 0 || (channels != 1 && channels != 3)) {
    throw ShapeError("PNG needs a positive size and 1 or 3 channels");
  }
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  if (pixels.size() != stride * height) throw ShapeError("PNG pixel buffer does not match its size");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  Bytes out;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("PNG encoding failed");
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep d, png_size_t n) {
        auto* o = static_cast<Bytes*>(png_get_io_ptr(p));
        const auto* b = reinterpret_cast<const std::byte*>(d);
        o->insert(o->end(), b, b + n);
      },
      nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(pixels.data() + y * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

Bytes encode_npy(const EventTensor& t) {
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" +
                       std::to_string(t.channels.size()) + ", " + std::to_string(t.height) + ", " +
                       std::to_string(t.width) + "), }";
  // magic(6) + version(2) + len(2) + header, padded with spaces to 64 bytes.
  const std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header += '\n';
  bytes::Writer w(10 + header.size() + t.data.size() * 8);
  w.put(std::uint8_t{0x93});
  w.put_magic("NUMPY");
  w.put(std::uint8_t{1});
  w.put(std::uint8_t{0});
  w.put(static_cast<std::uint16_t>(header.size()));
  w.put_magic(header);
  for (double v : t.data) w.put(v);
  return w.take();
}

// ---- JSON ----

nlohmann::json parse_json(std::string_view text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(what + ": " + e.what());
  }
}

namespace {

template <class F>
auto json_field(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(what + ": " + e.what());
  }
}

void check_version(const nlohmann::json& j, const std::string& what) {
  const int v = json_field(what, [&] { return j.at("version").get<int>(); });
  if (v != 1) throw ValidationError(what + ": unsupported version " + std::to_string(v));
}

}  // namespace

nlohmann::json labelset_to_json(const LabelSet& labels) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["free_id"] = labels.free_id();
  j["unknown_id"] = labels.unknown_id();
  auto& arr = j["labels"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < labels.labels().size(); ++i) {
    const auto& l = labels.labels()[i];
    nlohmann::ordered_json e{{"id", l.id},
                             {"name", l.name},
                             {"group", std::string(group_name(l.group))},
                             {"dynamic", l.dynamic}};
    if (labels.frequency()) e["frequency"] = (*labels.frequency())[i];
    arr.push_back(std::move(e));
  }
  return nlohmann::json::parse(j.dump());
}

LabelSet labelset_from_json(const nlohmann::json& j) {
  check_version(j, "labelset");
  return json_field("labelset", [&] {
    std::vector<SemanticLabel> labels;
    std::vector<double> freq;
    bool any_freq = false;
    for (const auto& e : j.at("labels")) {
      SemanticLabel l;
      l.id = e.at("id").get<LabelId>();
      l.name = e.at("name").get<std::string>();
      l.group = group_from_name(e.value("group", std::string("none")));
      l.dynamic = e.value("dynamic", false);
      if (e.contains("frequency")) any_freq = true;
      freq.push_back(e.value("frequency", 0.0));
      labels.push_back(std::move(l));
    }
    std::optional<std::vector<double>> f;
    if (any_freq) f = std::move(freq);
    return LabelSet(std::move(labels), j.at("free_id").get<LabelId>(),
                    j.at("unknown_id").get<LabelId>(), std::move(f));
  });
}

nlohmann::json camera_to_json(const CameraModel& cam) {
  nlohmann::json r = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) r.push_back(cam.cam_from_lidar.rotation()(i, k));
  }
  const auto& t = cam.cam_from_lidar.translation();
  return {{"version", 1}, {"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx}, {"cy", cam.cy},
          {"width", cam.width}, {"height", cam.height},
          {"cam_from_lidar", {{"rotation", r}, {"translation", {t.x(), t.y(), t.z()}}}}};
}

CameraModel camera_from_json(const nlohmann::json& j) {
  check_version(j, "calibration");
  CameraModel cam = json_field("calibration", [&] {
    CameraModel c;
    c.fx = j.at("fx").get<double>();
    c.fy = j.at("fy").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
    const auto& ext = j.at("cam_from_lidar");
    const auto r = ext.at("rotation").get<std::vector<double>>();
    const auto t = ext.at("translation").get<std::vector<double>>();
    if (r.size() != 9 || t.size() != 3) throw ValidationError("calibration: rotation needs 9 values, translation 3");
    Mat3 m;
    for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = r[i];
    c.cam_from_lidar = Pose(m, Point3(t[0], t[1], t[2]));
    return c;
  });
  cam.validate();
  return cam;
}

nlohmann::json pose_to_json(const TrackPose& p) {
  return {{"time_us", p.time}, {"x", p.x}, {"y", p.y}, {"yaw", p.yaw}};
}

nlohmann::json tracks_to_json(std::span<const InstanceTrack> tracks) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : tracks) {
    nlohmann::json kfs = nlohmann::json::array();
    for (const auto& k : t.keyframes) kfs.push_back(pose_to_json(k));
    arr.push_back({{"instance_id", t.instance_id}, {"label", t.label}, {"keyframes", kfs}});
  }
  return {{"version", 1}, {"tracks", arr}};
}

std::vector<InstanceTrack> tracks_from_json(const nlohmann::json& j) {
  check_version(j, "tracks");
  auto tracks = json_field("tracks", [&] {
    std::vector<InstanceTrack> out;
    for (const auto& e : j.at("tracks")) {
      InstanceTrack t;
      t.instance_id = e.at("instance_id").get<std::uint32_t>();
      t.label = e.at("label").get<LabelId>();
      for (const auto& k : e.at("keyframes")) {
        Keyframe kf;
        kf.time = k.at("time_us").get<TimeUs>();
        kf.x = k.at("x").get<double>();
        kf.y = k.at("y").get<double>();
        kf.yaw = k.at("yaw").get<double>();
        t.keyframes.push_back(kf);
      }
      out.push_back(std::move(t));
    }
    return out;
  });
  for (const auto& t : tracks) {
    try {
      t.validate(false);
    } catch (const InvalidTrackError& e) {
      throw InvalidTrackError("track " + std::to_string(t.instance_id) + ": " + e.what());
    }
  }
  return tracks;
}

}  // namespace ssc::io
