#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <span>
#include <string_view>
#include <vector>

#include "egohand/common.hpp"

namespace egohand {

enum class Polarity : std::int8_t { Negative = -1, Positive = 1 };

struct Event {
  Microseconds t = 0;
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  Polarity polarity = Polarity::Positive;

  friend bool operator==(const Event&, const Event&) = default;
};

enum class EventFormat { BinaryV1, Csv };

/// Events of one sensor, stored column-wise and sorted by timestamp.
class EventStream {
 public:
  EventStream() = default;
  EventStream(std::uint16_t width, std::uint16_t height) : width_(width), height_(height) {}

  std::uint16_t width() const { return width_; }
  std::uint16_t height() const { return height_; }
  std::size_t size() const { return t_.size(); }
  bool empty() const { return t_.empty(); }

  /// Appends an event. Throws OutOfBoundsPixel or NonMonotonicTimestamp
  /// (with the index the event would have taken).
  void push_back(const Event& e);
  void reserve(std::size_t n);

  Event operator[](std::size_t i) const {
    return {t_[i], x_[i], y_[i], static_cast<Polarity>(p_[i])};
  }

  std::span<const Microseconds> timestamps() const { return t_; }
  std::span<const std::uint16_t> xs() const { return x_; }
  std::span<const std::uint16_t> ys() const { return y_; }
  std::span<const std::int8_t> polarities() const { return p_; }

  friend bool operator==(const EventStream&, const EventStream&) = default;

 private:
  std::uint16_t width_ = 0;
  std::uint16_t height_ = 0;
  std::vector<Microseconds> t_;
  std::vector<std::uint16_t> x_;
  std::vector<std::uint16_t> y_;
  std::vector<std::int8_t> p_;
};

/// Events with t_end - delta_t < t <= t_end. Views into the source stream,
/// which must outlive the window.
struct EventWindow {
  Microseconds t_end = 0;
  Microseconds delta_t = 0;
  std::uint16_t sensor_width = 0;
  std::uint16_t sensor_height = 0;
  std::span<const Microseconds> t;
  std::span<const std::uint16_t> x;
  std::span<const std::uint16_t> y;
  std::span<const std::int8_t> polarity;

  std::size_t size() const { return t.size(); }
};

inline constexpr std::size_t kBinaryV1HeaderSize = 4 + 2 + 2 + 8;
inline constexpr std::size_t kBinaryV1RecordSize = 13;
inline constexpr Microseconds kMaxDeltaT = Microseconds{1} << 32;
inline constexpr Microseconds kDefaultDeltaT = 33'000;

struct SensorSize {
  std::uint16_t width = 0;
  std::uint16_t height = 0;
};

/// Parses a binary_v1 or CSV event file. CSV carries no sensor geometry, so
/// `sensor` is required for it; for binary_v1 it is optional and must match
/// the header when given (DimensionMismatch otherwise).
EventStream parse_events(std::span<const std::uint8_t> bytes, EventFormat format,
                         std::optional<SensorSize> sensor = std::nullopt);
std::vector<std::uint8_t> write_events(const EventStream& stream, EventFormat format);

EventStream read_event_file(const std::string& path, EventFormat format,
                            std::optional<SensorSize> sensor = std::nullopt);
void write_event_file(const std::string& path, const EventStream& stream, EventFormat format);
EventFormat event_format_from_path(std::string_view path);

/// Binary search for the window bounds; an empty window is valid.
EventWindow window_slice(const EventStream& stream, Microseconds t_end, Microseconds delta_t);

}  // namespace egohand
