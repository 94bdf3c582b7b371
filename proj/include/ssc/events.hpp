#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ssc {

struct Event {
  std::uint64_t t = 0;  // microseconds
  std::uint16_t x = 0, y = 0;
  std::int8_t polarity = 1;  // +1 or -1

  bool operator==(const Event&) const = default;
};

struct EventStream {
  std::vector<Event> events;
  int width = 0, height = 0;
  std::uint64_t t_start = 0, t_end = 0;

  /// Throws ValidationError naming the first violated invariant.
  void validate() const;
};

/// Channel-major (channel, row, column) tensor of doubles.
struct EventTensor {
  int width = 0, height = 0;
  std::vector<std::string> channels;
  std::vector<double> data;

  double at(std::size_t c, int y, int x) const {
    return data[(c * height + static_cast<std::size_t>(y)) * width + x];
  }
  double& at(std::size_t c, int y, int x) {
    return data[(c * height + static_cast<std::size_t>(y)) * width + x];
  }
};

enum class RepresentationKind { kRasterized, kFrame, kTimeSurface, kHats };

RepresentationKind representation_from_name(std::string_view name);
std::string_view representation_name(RepresentationKind kind);

struct RepresentationParams {
  double tau_us = 50'000.0;
  int hats_cell = 8;
  /// HATS output at full resolution (each cell value repeated) instead of
  /// one value per cell.
  bool hats_broadcast = true;
};

/// rasterized: pos count, neg count, latest pos / neg timestamp mapped to
///   [0, 1] over the window (0 where no event).
/// frame: signed polarity sum.
/// timesurface: per polarity exp(-(t_end - t_last) / tau), 0 where no event.
/// hats: cell-average of the time surface.
/// The stream is validated first; out-of-sensor events are rejected.
EventTensor build_representation(const EventStream& stream, RepresentationKind kind,
                                 const RepresentationParams& params = {});

namespace reference {
EventTensor build_representation(const EventStream& stream, RepresentationKind kind,
                                 const RepresentationParams& params = {});
}  // namespace reference

inline constexpr std::size_t kEventRecordBytes = 13;

/// Decodes packed little-endian records (u64 t, u16 x, u16 y, u8 polarity
/// in {0,1}). The window defaults to the first/last event time.
EventStream parse_events(std::span<const std::byte> bytes, int width, int height,
                         std::optional<std::pair<std::uint64_t, std::uint64_t>> window = std::nullopt);

std::vector<std::byte> encode_event_records(std::span<const Event> events);

}  // namespace ssc
