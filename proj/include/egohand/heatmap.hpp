#pragma once
// Heatmap grids and their 2D decoders.
//
// Grid convention: node (i, j) of a grid sits at pixel coordinate (i, j)
// scaled by the grid's downscale factor. bilinear_sample uses the
// align-corners mapping (u_hat = -1 -> node 0, u_hat = +1 -> node W-1);
// normalize_pixel keeps the W/H denominators instead, so the two differ by
// u/W pixels. grid_to_normalized is the exact inverse of the sampler's
// mapping and is what the solver uses when it samples evidence.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "egohand/common.hpp"

namespace egohand {

inline constexpr double kDefaultSoftArgmaxTemperature = 0.1;

/// J x height x width non-negative values, joint-major then row-major.
struct HeatmapStack {
  int joints = 0;
  int width = 0;
  int height = 0;
  std::vector<float> values;

  HeatmapStack() = default;
  HeatmapStack(int joints_, int width_, int height_)
      : joints(joints_), width(width_), height(height_),
        values(static_cast<std::size_t>(joints_) * width_ * height_, 0.0f) {}

  std::size_t channel_size() const { return static_cast<std::size_t>(width) * height; }
  std::span<const float> channel(int j) const { return {values.data() + j * channel_size(), channel_size()}; }
  std::span<float> channel(int j) { return {values.data() + j * channel_size(), channel_size()}; }
  float at(int j, int x, int y) const { return values[j * channel_size() + static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const HeatmapStack&, const HeatmapStack&) = default;
};

struct DecodedKeypoints2D {
  Keypoints2D coords{};
  std::array<double, kNumJoints> confidence{};
};

/// Channel-last H x W x C view.
struct GridView {
  std::span<const float> values;
  int width = 0;
  int height = 0;
  int channels = 1;
};

struct SoftArgmaxResult {
  Vec2 coord;
  double confidence = 0.0;
};

/// Channel j = exp(-|x - kp_j|^2 / (2 sigma^2)) at every node; joints with
/// visible[j] == false render all-zero. Throws InvalidArgument for sigma <= 0.
HeatmapStack render_gaussian(std::span<const Vec2> keypoints, std::span<const bool> visible, double sigma,
                             int width, int height);

/// Expected node coordinate under the heatmap's softmax at `temperature`,
/// measured against the zero-evidence level: a node's weight is
/// exp((v - max)/T) - exp(-max/T), so empty nodes carry no mass. Confidence
/// is the peak value clamped to [0, 1]. An all-zero channel decodes to the
/// grid center with confidence 0.
SoftArgmaxResult soft_argmax(std::span<const float> channel, int width, int height,
                             double temperature = kDefaultSoftArgmaxTemperature);

/// soft_argmax per channel, coordinates multiplied by `scale` (the grid's
/// downscale factor) to land in sensor pixels.
DecodedKeypoints2D decode_soft_argmax(const HeatmapStack& stack, double temperature = kDefaultSoftArgmaxTemperature,
                                      double scale = 1.0);

/// Hard argmax node per channel (first maximum in row-major order), scaled by
/// `scale`; confidence is the peak value clamped to [0, 1].
DecodedKeypoints2D decode_argmax(const HeatmapStack& stack, double scale = 1.0);

/// Align-corners inverse of bilinear_sample's mapping.
inline Vec2 grid_to_normalized(const Vec2& node, int width, int height) {
  return {width > 1 ? 2.0 * node.x() / (width - 1) - 1.0 : 0.0,
          height > 1 ? 2.0 * node.y() / (height - 1) - 1.0 : 0.0};
}

/// Bilinear blend of the four nodes around u_hat; zeros outside [-1, 1]^2.
void bilinear_sample(const GridView& grid, const Vec2& u_hat, std::span<double> out);
std::vector<double> bilinear_sample(const GridView& grid, const Vec2& u_hat);

/// "HMS1" dump: magic, u16 J, u16 width, u16 height, J*H*W float32 LE.
std::vector<std::uint8_t> write_heatmaps(const HeatmapStack& stack);
HeatmapStack parse_heatmaps(std::span<const std::uint8_t> bytes);
HeatmapStack read_heatmap_file(const std::string& path);
void write_heatmap_file(const std::string& path, const HeatmapStack& stack);

}  // namespace egohand
