#include "ssc/events.hpp"

#include <algorithm>
#include <cmath>

#include "bytes.hpp"
#include "ssc/error.hpp"

namespace ssc {

void EventStream::validate() const {
  if (width <= 0 || height <= 0) throw ValidationError("event sensor dimensions must be positive");
  if (t_end < t_start) throw ValidationError("event window ends before it starts");
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (e.x >= width || e.y >= height) {
      throw ValidationError("event " + std::to_string(i) + " at (" + std::to_string(e.x) + "," +
                            std::to_string(e.y) + ") lies outside the sensor");
    }
    if (e.polarity != 1 && e.polarity != -1) {
      throw ValidationError("event " + std::to_string(i) + " has polarity " +
                            std::to_string(e.polarity));
    }
    if (e.t < t_start || e.t > t_end) {
      throw ValidationError("event " + std::to_string(i) + " time " + std::to_string(e.t) +
                            " outside window");
    }
    if (i > 0 && e.t < events[i - 1].t) {
      throw ValidationError("events not sorted: event " + std::to_string(i) + " (t=" +
                            std::to_string(e.t) + ") precedes event " + std::to_string(i - 1) +
                            " (t=" + std::to_string(events[i - 1].t) + ")");
    }
  }
}

RepresentationKind representation_from_name(std::string_view name) {
  if (name == "rasterized") return RepresentationKind::kRasterized;
  if (name == "frame") return RepresentationKind::kFrame;
  if (name == "timesurface") return RepresentationKind::kTimeSurface;
  if (name == "hats") return RepresentationKind::kHats;
  throw ConfigError("unknown event representation '" + std::string(name) + "'");
}

std::string_view representation_name(RepresentationKind kind) {
  switch (kind) {
    case RepresentationKind::kRasterized: return "rasterized";
    case RepresentationKind::kFrame: return "frame";
    case RepresentationKind::kTimeSurface: return "timesurface";
    case RepresentationKind::kHats: return "hats";
  }
  return "unknown";
}

namespace {

EventTensor make_tensor(int w, int h, std::vector<std::string> channels) {
  EventTensor t;
  t.width = w;
  t.height = h;
  t.data.assign(channels.size() * static_cast<std::size_t>(w) * h, 0.0);
  t.channels = std::move(channels);
  return t;
}

void check_params(const EventStream& s, RepresentationKind kind, const RepresentationParams& p) {
  s.validate();
  if (kind == RepresentationKind::kTimeSurface || kind == RepresentationKind::kHats) {
    if (!(p.tau_us > 0.0)) throw ConfigError("time-surface tau must be positive");
  }
  if (kind == RepresentationKind::kHats) {
    if (p.hats_cell < 1 || s.width % p.hats_cell != 0 || s.height % p.hats_cell != 0) {
      throw ConfigError("HATS cell " + std::to_string(p.hats_cell) + " must divide " +
                        std::to_string(s.width) + "x" + std::to_string(s.height));
    }
  }
}

struct LatestPerPixel {
  std::vector<std::uint64_t> t[2];
  std::vector<std::uint32_t> count[2];
};

// Slot 0 holds positive events, slot 1 negative.
LatestPerPixel scatter(const EventStream& s) {
  const std::size_t n = static_cast<std::size_t>(s.width) * s.height;
  LatestPerPixel l;
  for (int p = 0; p < 2; ++p) {
    l.t[p].assign(n, 0);
    l.count[p].assign(n, 0);
  }
  for (const auto& e : s.events) {
    const int slot = e.polarity > 0 ? 0 : 1;
    const std::size_t k = static_cast<std::size_t>(e.y) * s.width + e.x;
    ++l.count[slot][k];
    l.t[slot][k] = e.t;
  }
  return l;
}

double normalized_time(const EventStream& s, std::uint64_t t) {
  if (s.t_end == s.t_start) return 1.0;
  return static_cast<double>(t - s.t_start) / static_cast<double>(s.t_end - s.t_start);
}

double decay(const EventStream& s, std::uint64_t t_last, double tau) {
  return std::exp(-static_cast<double>(s.t_end - t_last) / tau);
}

EventTensor hats_from_surface(const EventTensor& ts, const RepresentationParams& p) {
  const int cell = p.hats_cell;
  const int cw = ts.width / cell, ch = ts.height / cell;
  EventTensor out = p.hats_broadcast ? make_tensor(ts.width, ts.height, {"hats_pos", "hats_neg"})
                                     : make_tensor(cw, ch, {"hats_pos", "hats_neg"});
  const int total = 2 * cw * ch;
  const double area = static_cast<double>(cell) * cell;
#pragma omp parallel for schedule(static)
  for (int job = 0; job < total; ++job) {
    const int c = job / (cw * ch);
    const int cy = (job / cw) % ch;
    const int cx = job % cw;
    double sum = 0.0;
    for (int y = cy * cell; y < (cy + 1) * cell; ++y) {
      for (int x = cx * cell; x < (cx + 1) * cell; ++x) sum += ts.at(c, y, x);
    }
    const double mean = sum / area;
    if (p.hats_broadcast) {
      for (int y = cy * cell; y < (cy + 1) * cell; ++y) {
        for (int x = cx * cell; x < (cx + 1) * cell; ++x) out.at(c, y, x) = mean;
      }
    } else {
      out.at(c, cy, cx) = mean;
    }
  }
  return out;
}

}  // namespace

EventTensor build_representation(const EventStream& stream, RepresentationKind kind,
                                 const RepresentationParams& params) {
  check_params(stream, kind, params);
  const int w = stream.width, h = stream.height;
  const auto n = static_cast<std::ptrdiff_t>(w) * h;
  const LatestPerPixel l = scatter(stream);

  switch (kind) {
    case RepresentationKind::kRasterized: {
      EventTensor t = make_tensor(w, h, {"pos_count", "neg_count", "pos_time", "neg_time"});
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t k = 0; k < n; ++k) {
        for (int slot = 0; slot < 2; ++slot) {
          const auto c = l.count[slot][k];
          t.data[slot * n + k] = static_cast<double>(c);
          t.data[(2 + slot) * n + k] = c ? normalized_time(stream, l.t[slot][k]) : 0.0;
        }
      }
      return t;
    }
    case RepresentationKind::kFrame: {
      EventTensor t = make_tensor(w, h, {"polarity_sum"});
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t k = 0; k < n; ++k) {
        t.data[k] = static_cast<double>(l.count[0][k]) - static_cast<double>(l.count[1][k]);
      }
      return t;
    }
    case RepresentationKind::kTimeSurface:
    case RepresentationKind::kHats: {
      EventTensor t = make_tensor(w, h, {"ts_pos", "ts_neg"});
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t k = 0; k < n; ++k) {
        for (int slot = 0; slot < 2; ++slot) {
          t.data[slot * n + k] = l.count[slot][k] ? decay(stream, l.t[slot][k], params.tau_us) : 0.0;
        }
      }
      return kind == RepresentationKind::kHats ? hats_from_surface(t, params) : t;
    }
  }
  throw ConfigError("unknown event representation");
}

namespace reference {

EventTensor build_representation(const EventStream& stream, RepresentationKind kind,
                                 const RepresentationParams& params) {
  check_params(stream, kind, params);
  const int w = stream.width, h = stream.height;
  switch (kind) {
    case RepresentationKind::kRasterized: {
      EventTensor t = make_tensor(w, h, {"pos_count", "neg_count", "pos_time", "neg_time"});
      for (const auto& e : stream.events) {
        const int slot = e.polarity > 0 ? 0 : 1;
        t.at(slot, e.y, e.x) += 1.0;
        t.at(2 + slot, e.y, e.x) = normalized_time(stream, e.t);
      }
      return t;
    }
    case RepresentationKind::kFrame: {
      EventTensor t = make_tensor(w, h, {"polarity_sum"});
      for (const auto& e : stream.events) t.at(0, e.y, e.x) += e.polarity;
      return t;
    }
    case RepresentationKind::kTimeSurface:
    case RepresentationKind::kHats: {
      EventTensor t = make_tensor(w, h, {"ts_pos", "ts_neg"});
      for (const auto& e : stream.events) {
        t.at(e.polarity > 0 ? 0 : 1, e.y, e.x) = decay(stream, e.t, params.tau_us);
      }
      if (kind == RepresentationKind::kTimeSurface) return t;
      const int cell = params.hats_cell;
      EventTensor out = params.hats_broadcast
                            ? make_tensor(w, h, {"hats_pos", "hats_neg"})
                            : make_tensor(w / cell, h / cell, {"hats_pos", "hats_neg"});
      for (int c = 0; c < 2; ++c) {
        for (int cy = 0; cy < h / cell; ++cy) {
          for (int cx = 0; cx < w / cell; ++cx) {
            double sum = 0.0;
            for (int y = 0; y < cell; ++y) {
              for (int x = 0; x < cell; ++x) sum += t.at(c, cy * cell + y, cx * cell + x);
            }
            const double mean = sum / (static_cast<double>(cell) * cell);
            if (!params.hats_broadcast) {
              out.at(c, cy, cx) = mean;
              continue;
            }
            for (int y = 0; y < cell; ++y) {
              for (int x = 0; x < cell; ++x) out.at(c, cy * cell + y, cx * cell + x) = mean;
            }
          }
        }
      }
      return out;
    }
  }
  throw ConfigError("unknown event representation");
}

}  // namespace reference

EventStream parse_events(std::span<const std::byte> data, int width, int height,
                         std::optional<std::pair<std::uint64_t, std::uint64_t>> window) {
  EventStream s;
  s.width = width;
  s.height = height;
  const std::size_t whole = data.size() / kEventRecordBytes * kEventRecordBytes;
  if (whole != data.size()) throw ParseError("truncated event record", whole);
  s.events.reserve(data.size() / kEventRecordBytes);
  for (std::size_t off = 0; off < data.size(); off += kEventRecordBytes) {
    bytes::Reader r(data.subspan(off, kEventRecordBytes));
    Event e;
    e.t = r.get<std::uint64_t>();
    e.x = r.get<std::uint16_t>();
    e.y = r.get<std::uint16_t>();
    const auto pol = r.get<std::uint8_t>();
    if (pol > 1) throw ParseError("event polarity byte " + std::to_string(pol) + " not in {0,1}", off + 12);
    e.polarity = pol ? 1 : -1;
    s.events.push_back(e);
  }
  if (window) {
    s.t_start = window->first;
    s.t_end = window->second;
  } else if (!s.events.empty()) {
    s.t_start = s.events.front().t;
    s.t_end = s.events.back().t;
    for (const auto& e : s.events) {
      s.t_start = std::min(s.t_start, e.t);
      s.t_end = std::max(s.t_end, e.t);
    }
  }
  s.validate();
  return s;
}

std::vector<std::byte> encode_event_records(std::span<const Event> events) {
  bytes::Writer w(events.size() * kEventRecordBytes);
  for (const auto& e : events) {
    w.put(e.t);
    w.put(e.x);
    w.put(e.y);
    w.put(static_cast<std::uint8_t>(e.polarity > 0 ? 1 : 0));
  }
  return w.take();
}

}  // namespace ssc
