#include "ssc/service.hpp"

#include <httplib.h>

#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <thread>

#include "ssc/error.hpp"
#include "ssc/io.hpp"

namespace ssc {

std::string payload_revision(std::string_view payload) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : payload) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[24];
  std::snprintf(buf, sizeof buf, "\"%016llx\"", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

const std::string kEmptyTracks = "{\"version\":1,\"tracks\":[]}";

struct SequenceState {
  const SequenceEntry* entry = nullptr;
  std::mutex load_mu;
  std::shared_ptr<const SequenceInputs> inputs;  // loaded on first BEV request
  std::mutex writer;                              // held for the duration of a PUT
};

void send_json(httplib::Response& res, const nlohmann::json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& msg) {
  send_json(res, {{"error", msg}}, status);
}

std::array<std::uint8_t, 3> label_color(LabelId id) {
  static const std::map<LabelId, std::array<std::uint8_t, 3>> palette{
      {4, {0, 120, 255}},   {5, {80, 30, 180}},  {6, {0, 200, 255}},   {7, {120, 60, 220}},
      {8, {255, 80, 80}},   {11, {255, 30, 30}}, {1, {160, 160, 160}}, {2, {200, 120, 200}},
      {3, {230, 160, 60}},  {9, {40, 160, 40}},  {10, {150, 200, 80}}};
  if (auto it = palette.find(id); it != palette.end()) return it->second;
  const auto h = static_cast<std::uint8_t>(id * 53u);
  return {static_cast<std::uint8_t>(255 - h / 2), static_cast<std::uint8_t>(h), 200};
}

std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double yaw_of(const Pose& p) { return std::atan2(p.rotation()(1, 0), p.rotation()(0, 0)); }

}  // namespace

struct AnnotationService::Impl {
  Manifest manifest;
  PipelineConfig config;
  ServiceOptions options;
  std::map<std::string, std::unique_ptr<SequenceState>> sequences;
  httplib::Server server;
  std::thread thread;

  SequenceState* find(const std::string& id) {
    auto it = sequences.find(id);
    return it == sequences.end() ? nullptr : it->second.get();
  }

  std::shared_ptr<const SequenceInputs> inputs(SequenceState& s) {
    std::lock_guard lock(s.load_mu);
    if (!s.inputs) s.inputs = std::make_shared<const SequenceInputs>(load_sequence(*s.entry));
    return s.inputs;
  }

  static std::string read_tracks(const SequenceState& s) {
    if (!fs::exists(s.entry->tracks)) return kEmptyTracks;
    return io::read_text(s.entry->tracks);
  }

  std::vector<TimeUs> frame_times(const SequenceState& s) const {
    std::vector<TimeUs> t;
    for (const auto& f : s.entry->frames) t.push_back(f.time);
    return t;
  }

  void routes() {
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      } catch (...) {
        send_error(res, 500, "unknown error");
      }
    });

    server.Get("/sequences", [this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& s : manifest.sequences) {
        arr.push_back({{"id", s.id}, {"frames", s.frames.size()}});
      }
      send_json(res, arr);
    });

    server.Get(R"(/sequences/([^/]+)/frames)", [this](const httplib::Request& req, httplib::Response& res) {
      auto* s = find(req.matches[1]);
      if (!s) return send_error(res, 404, "no such sequence");
      const auto poses = io::parse_poses(io::read_text(s->entry->poses));
      nlohmann::json arr = nlohmann::json::array();
      for (std::size_t i = 0; i < s->entry->frames.size(); ++i) {
        const auto& f = s->entry->frames[i];
        nlohmann::json fj{{"index", i}, {"time_us", f.time}};
        if (f.pose_index < poses.size()) {
          const auto& p = poses[f.pose_index];
          fj["pose"] = {{"x", p.translation().x()}, {"y", p.translation().y()}, {"yaw", yaw_of(p)}};
        }
        arr.push_back(std::move(fj));
      }
      send_json(res, arr);
    });

    server.Get(R"(/sequences/([^/]+)/bev/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto* s = find(req.matches[1]);
      if (!s) return send_error(res, 404, "no such sequence");
      const std::size_t frame = std::stoul(req.matches[2]);
      if (frame >= s->entry->frames.size()) return send_error(res, 404, "no such frame");
      const auto in = inputs(*s);
      render_bev(*in, in->times[frame], res);
    });

    server.Get(R"(/sequences/([^/]+)/tracks)", [this](const httplib::Request& req, httplib::Response& res) {
      auto* s = find(req.matches[1]);
      if (!s) return send_error(res, 404, "no such sequence");
      const std::string body = read_tracks(*s);
      res.set_header("ETag", payload_revision(body));
      res.set_content(body, "application/json");
    });

    server.Put(R"(/sequences/([^/]+)/tracks)", [this](const httplib::Request& req, httplib::Response& res) {
      auto* s = find(req.matches[1]);
      if (!s) return send_error(res, 404, "no such sequence");
      std::unique_lock lock(s->writer, std::try_to_lock);
      if (!lock.owns_lock()) return send_error(res, 409, "another writer is saving this sequence");
      try {
        const auto tracks = io::tracks_from_json(io::parse_json(req.body, "tracks"));
        const LabelSet labels = s->entry->labelset
                                    ? io::labelset_from_json(io::parse_json(
                                          io::read_text(*s->entry->labelset), "labelset"))
                                    : default_labelset();
        for (const auto& t : tracks) {
          if (!labels.is_dynamic(t.label)) {
            throw InvalidTrackError("track " + std::to_string(t.instance_id) +
                                    " label is not dynamic");
          }
        }
      } catch (const Error& e) {
        return send_error(res, 400, e.what());
      }
      const std::string current = read_tracks(*s);
      if (req.has_header("If-Match") && req.get_header_value("If-Match") != "*" &&
          req.get_header_value("If-Match") != payload_revision(current)) {
        return send_error(res, 412, "tracks changed since they were read");
      }
      if (options.before_commit) options.before_commit(s->entry->id);
      io::write_text_atomic(s->entry->tracks, req.body);
      const std::string rev = payload_revision(req.body);
      res.set_header("ETag", rev);
      send_json(res, {{"revision", rev}});
    });

    server.Post(R"(/sequences/([^/]+)/interpolate)", [this](const httplib::Request& req, httplib::Response& res) {
      auto* s = find(req.matches[1]);
      if (!s) return send_error(res, 404, "no such sequence");
      std::vector<Keyframe> keyframes;
      std::vector<TimeUs> times;
      try {
        const auto j = io::parse_json(req.body, "interpolate request");
        for (const auto& k : j.at("keyframes")) {
          keyframes.push_back({k.at("time_us").get<TimeUs>(), k.at("x").get<double>(),
                               k.at("y").get<double>(), k.at("yaw").get<double>()});
        }
        times = j.contains("times_us") ? j["times_us"].get<std::vector<TimeUs>>() : frame_times(*s);
        InstanceTrack probe;
        probe.keyframes = keyframes;
        probe.validate(false);
        if (!std::is_sorted(times.begin(), times.end())) throw ValidationError("times_us must be sorted");
      } catch (const nlohmann::json::exception& e) {
        return send_error(res, 400, e.what());
      } catch (const Error& e) {
        return send_error(res, 400, e.what());
      }
      nlohmann::json poses = nlohmann::json::array();
      for (const auto& p : interpolate_keyframes(keyframes, times)) poses.push_back(io::pose_to_json(p));
      send_json(res, {{"poses", poses}});
    });
  }

  void render_bev(const SequenceInputs& in, TimeUs time, httplib::Response& res) const {
    LabeledPointCloud both = in.maps.static_map;
    both.append(in.maps.dynamic_map);
    if (both.empty()) return send_error(res, 404, "sequence has no points");
    const BevSpec spec = bev_spec_covering(both, options.bev_cell);
    const BevRaster stat = rasterize_bev(in.maps.static_map, spec, in.labels.free_id());
    const BevRaster dyn = rasterize_bev(in.maps.dynamic_map, spec, in.labels.free_id());

    LabeledPointCloud now;
    for (std::size_t i = 0; i < in.maps.dynamic_map.size(); ++i) {
      if (in.maps.dynamic_map.stamps[i] == time) {
        now.push_back(in.maps.dynamic_map.points[i], in.maps.dynamic_map.labels[i], time);
      }
    }
    const BevRaster cur = rasterize_bev(now, spec, in.labels.free_id());

    std::vector<std::uint8_t> px(static_cast<std::size_t>(spec.width) * spec.height * 3, 0);
    for (int cy = 0; cy < spec.height; ++cy) {
      const int row = spec.height - 1 - cy;
      for (int cx = 0; cx < spec.width; ++cx) {
        std::uint8_t* p = &px[(static_cast<std::size_t>(row) * spec.width + cx) * 3];
        if (stat.count(cx, cy)) p[0] = p[1] = p[2] = 60;
        if (dyn.count(cx, cy)) {
          const auto c = label_color(dyn.label(cx, cy));
          for (int k = 0; k < 3; ++k) p[k] = static_cast<std::uint8_t>(c[k] / 2);
        }
        if (cur.count(cx, cy)) {
          const auto c = label_color(cur.label(cx, cy));
          for (int k = 0; k < 3; ++k) p[k] = c[k];
        }
      }
    }
    const auto png = io::encode_png(spec.width, spec.height, 3, px);
    res.set_header("X-Bev-Origin-X", exact(spec.origin_x));
    res.set_header("X-Bev-Origin-Y", exact(spec.origin_y));
    res.set_header("X-Bev-Cell", exact(spec.cell));
    res.set_header("X-Bev-Width", std::to_string(spec.width));
    res.set_header("X-Bev-Height", std::to_string(spec.height));
    res.set_content(std::string(reinterpret_cast<const char*>(png.data()), png.size()), "image/png");
  }
};

AnnotationService::AnnotationService(Manifest manifest, PipelineConfig config, ServiceOptions options)
    : impl_(std::make_unique<Impl>()) {
  config.validate();
  if (!(options.bev_cell > 0.0)) throw ConfigError("BEV cell must be positive");
  impl_->manifest = std::move(manifest);
  impl_->config = std::move(config);
  impl_->options = std::move(options);
  for (const auto& s : impl_->manifest.sequences) {
    auto st = std::make_unique<SequenceState>();
    st->entry = &s;
    impl_->sequences.emplace(s.id, std::move(st));
  }
  impl_->routes();
}

AnnotationService::~AnnotationService() { stop(); }

int AnnotationService::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    if (p < 0) throw ConfigError("cannot bind " + host);
    return p;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void AnnotationService::serve() { impl_->server.listen_after_bind(); }

void AnnotationService::start() {
  impl_->thread = std::thread([this] { serve(); });
  impl_->server.wait_until_ready();
}

void AnnotationService::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace ssc
