#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "egohand/events.hpp"

namespace egohand {

/// How events of the same polarity landing on one pixel combine.
enum class LnesMode : std::uint8_t {
  Sum = 0,     // sum of linear-decay weights
  Latest = 1,  // weight of the most recent event (= the max)
};

const char* to_string(LnesMode mode);
LnesMode lnes_mode_from_string(const std::string& name);

/// Two-channel event surface, height x width x 2 stored channel-last.
/// Channel 0 holds negative polarity, channel 1 positive.
struct LnesSurface {
  int width = 0;
  int height = 0;
  LnesMode mode = LnesMode::Sum;
  Microseconds t_end = 0;
  Microseconds delta_t = 0;
  std::vector<float> values;

  float at(int x, int y, int channel) const {
    return values[(static_cast<std::size_t>(y) * width + x) * 2 + channel];
  }

  friend bool operator==(const LnesSurface&, const LnesSurface&) = default;
};

/// Per-event weight max(0, 1 - (t_end - t)/delta_t); the scalar reference.
inline double lnes_weight(Microseconds t, Microseconds t_end, Microseconds delta_t) {
  const double w = 1.0 - static_cast<double>(t_end - t) / static_cast<double>(delta_t);
  return w > 0.0 ? w : 0.0;
}

/// Encodes a window into an event surface. `threads` > 1 splits the work
/// into row bands; the result is bit-identical for any thread count.
/// Throws DimensionMismatch if width/height differ from the window's sensor.
LnesSurface encode_lnes(const EventWindow& window, int width, int height, LnesMode mode,
                        unsigned threads = 1);

/// "LNS1" dump: magic, u16 width, u16 height, u8 mode, u8 reserved,
/// u64 t_end, u64 delta_t, then height*width*2 float32 LE (channel-last).
std::vector<std::uint8_t> write_lnes(const LnesSurface& surface);
LnesSurface parse_lnes(std::span<const std::uint8_t> bytes);

}  // namespace egohand
