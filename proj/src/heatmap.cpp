#include "egohand/heatmap.hpp"

#include <algorithm>
#include <cmath>

#include "binary_io.hpp"
#include "egohand/simd/kernels.hpp"

namespace egohand {

HeatmapStack render_gaussian(std::span<const Vec2> keypoints, std::span<const bool> visible, double sigma,
                             int width, int height) {
  if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be positive");
  if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidArgument, "grid size must be positive");
  if (visible.size() != keypoints.size()) {
    throw Error(ErrorCode::ShapeMismatch, "visibility mask length differs from keypoint count");
  }
  const int joints = static_cast<int>(keypoints.size());
  HeatmapStack stack(joints, width, height);
  const auto& k = simd::kernels();
  const double inv = -1.0 / (2.0 * sigma * sigma);
  std::vector<double> ex(width);
  std::vector<double> ey(height);
  for (int j = 0; j < joints; ++j) {
    if (!visible[j] || !keypoints[j].allFinite()) continue;
    // exp(-(dx^2 + dy^2)/2s^2) = exp(-dx^2/2s^2) * exp(-dy^2/2s^2)
    for (int x = 0; x < width; ++x) {
      const double d = x - keypoints[j].x();
      ex[x] = d * d * inv;
    }
    for (int y = 0; y < height; ++y) {
      const double d = y - keypoints[j].y();
      ey[y] = d * d * inv;
    }
    k.exp_array(ex.data(), ex.data(), ex.size());
    k.exp_array(ey.data(), ey.data(), ey.size());
    auto channel = stack.channel(j);
    for (int y = 0; y < height; ++y) {
      k.outer_product_row(channel.data() + static_cast<std::size_t>(y) * width, ex.data(), ey[y], width);
    }
  }
  return stack;
}

SoftArgmaxResult soft_argmax(std::span<const float> channel, int width, int height, double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be positive");
  if (channel.size() != static_cast<std::size_t>(width) * height || channel.empty()) {
    throw Error(ErrorCode::ShapeMismatch, "channel size does not match grid");
  }
  const Vec2 center(0.5 * (width - 1), 0.5 * (height - 1));
  const auto peak_it = std::max_element(channel.begin(), channel.end());
  const double peak = *peak_it;
  if (!(peak > 0.0)) return {center, 0.0};
  const double confidence = std::min(1.0, peak);

  const auto m = simd::kernels().softmax_moments(channel.data(), width, height, peak, 1.0 / temperature);
  if (!(m.mass > 0.0)) {
    // weights underflowed; fall back to the peak node
    const auto idx = static_cast<int>(peak_it - channel.begin());
    return {Vec2(idx % width, idx / width), confidence};
  }
  return {Vec2(m.sum_x / m.mass, m.sum_y / m.mass), confidence};
}

DecodedKeypoints2D decode_soft_argmax(const HeatmapStack& stack, double temperature, double scale) {
  if (stack.joints != kNumJoints) throw Error(ErrorCode::JointCountMismatch, "expected 42 heatmap channels");
  DecodedKeypoints2D out;
  for (int j = 0; j < stack.joints; ++j) {
    const auto r = soft_argmax(stack.channel(j), stack.width, stack.height, temperature);
    out.coords[j] = r.coord * scale;
    out.confidence[j] = r.confidence;
  }
  return out;
}

DecodedKeypoints2D decode_argmax(const HeatmapStack& stack, double scale) {
  if (stack.joints != kNumJoints) throw Error(ErrorCode::JointCountMismatch, "expected 42 heatmap channels");
  DecodedKeypoints2D out;
  for (int j = 0; j < stack.joints; ++j) {
    const auto ch = stack.channel(j);
    const auto it = std::max_element(ch.begin(), ch.end());
    const auto idx = static_cast<int>(it - ch.begin());
    out.coords[j] = Vec2(idx % stack.width, idx / stack.width) * scale;
    out.confidence[j] = std::clamp(static_cast<double>(*it), 0.0, 1.0);
  }
  return out;
}

void bilinear_sample(const GridView& grid, const Vec2& u_hat, std::span<double> out) {
  if (grid.width <= 0 || grid.height <= 0 || grid.channels <= 0 ||
      grid.values.size() != static_cast<std::size_t>(grid.width) * grid.height * grid.channels) {
    throw Error(ErrorCode::ShapeMismatch, "grid is empty or inconsistent");
  }
  if (out.size() != static_cast<std::size_t>(grid.channels)) {
    throw Error(ErrorCode::ShapeMismatch, "output size differs from channel count");
  }
  std::fill(out.begin(), out.end(), 0.0);
  if (!(u_hat.x() >= -1.0 && u_hat.x() <= 1.0 && u_hat.y() >= -1.0 && u_hat.y() <= 1.0)) return;

  const double gx = 0.5 * (u_hat.x() + 1.0) * (grid.width - 1);
  const double gy = 0.5 * (u_hat.y() + 1.0) * (grid.height - 1);
  const int x0 = std::min(static_cast<int>(std::floor(gx)), grid.width - 1);
  const int y0 = std::min(static_cast<int>(std::floor(gy)), grid.height - 1);
  const int x1 = std::min(x0 + 1, grid.width - 1);
  const int y1 = std::min(y0 + 1, grid.height - 1);
  const double fx = gx - x0;
  const double fy = gy - y0;
  const int C = grid.channels;
  auto node = [&](int x, int y, int c) {
    return static_cast<double>(grid.values[(static_cast<std::size_t>(y) * grid.width + x) * C + c]);
  };
  for (int c = 0; c < C; ++c) {
    const double top = (1.0 - fx) * node(x0, y0, c) + fx * node(x1, y0, c);
    const double bottom = (1.0 - fx) * node(x0, y1, c) + fx * node(x1, y1, c);
    out[c] = (1.0 - fy) * top + fy * bottom;
  }
}

std::vector<double> bilinear_sample(const GridView& grid, const Vec2& u_hat) {
  std::vector<double> out(std::max(grid.channels, 0));
  bilinear_sample(grid, u_hat, out);
  return out;
}

std::vector<std::uint8_t> write_heatmaps(const HeatmapStack& stack) {
  std::vector<std::uint8_t> out;
  out.reserve(10 + stack.values.size() * 4);
  io::ByteWriter w(out);
  w.bytes("HMS1", 4);
  w.le(static_cast<std::uint16_t>(stack.joints));
  w.le(static_cast<std::uint16_t>(stack.width));
  w.le(static_cast<std::uint16_t>(stack.height));
  for (float v : stack.values) w.f32(v);
  return out;
}

HeatmapStack parse_heatmaps(std::span<const std::uint8_t> bytes) {
  io::ByteReader in(bytes);
  if (!in.magic("HMS1") || !in.has(6)) throw Error(ErrorCode::MalformedHeader, "not an HMS1 file");
  const int joints = in.le<std::uint16_t>();
  const int width = in.le<std::uint16_t>();
  const int height = in.le<std::uint16_t>();
  HeatmapStack stack(joints, width, height);
  if (in.remaining() != stack.values.size() * 4) {
    throw Error(ErrorCode::TruncatedRecord, "payload size differs from J*H*W float32", in.remaining() / 4);
  }
  for (std::size_t i = 0; i < stack.values.size(); ++i) {
    const float v = in.f32();
    if (!std::isfinite(v) || v < 0.0f) throw Error(ErrorCode::InvalidRecord, "heatmap values must be finite and >= 0", i);
    stack.values[i] = v;
  }
  return stack;
}

HeatmapStack read_heatmap_file(const std::string& path) { return parse_heatmaps(io::read_file(path)); }

void write_heatmap_file(const std::string& path, const HeatmapStack& stack) {
  io::write_file(path, write_heatmaps(stack));
}

}  // namespace egohand
