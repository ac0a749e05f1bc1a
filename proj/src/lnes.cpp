#include "egohand/lnes.hpp"

#include <algorithm>
#include <thread>

#include "binary_io.hpp"
#include "egohand/simd/kernels.hpp"

namespace egohand {

const char* to_string(LnesMode mode) { return mode == LnesMode::Sum ? "sum" : "latest"; }

LnesMode lnes_mode_from_string(const std::string& name) {
  if (name == "sum") return LnesMode::Sum;
  if (name == "latest") return LnesMode::Latest;
  throw Error(ErrorCode::InvalidArgument, "unknown LNES mode '" + name + "' (expected sum|latest)");
}

namespace {

constexpr std::size_t kHeaderSize = 4 + 2 + 2 + 1 + 1 + 8 + 8;

// Accumulates events whose row lies in [row_begin, row_end), in window order.
void scatter_rows(const EventWindow& window, std::span<const float> weights, int width, LnesMode mode,
                  int row_begin, int row_end, float* values) {
  const auto n = window.size();
  for (std::size_t i = 0; i < n; ++i) {
    const int y = window.y[i];
    if (y < row_begin || y >= row_end) continue;
    const std::size_t idx = (static_cast<std::size_t>(y) * width + window.x[i]) * 2 + (window.polarity[i] > 0 ? 1 : 0);
    if (mode == LnesMode::Sum) {
      values[idx] += weights[i];
    } else {
      values[idx] = std::max(values[idx], weights[i]);
    }
  }
}

}  // namespace

LnesSurface encode_lnes(const EventWindow& window, int width, int height, LnesMode mode, unsigned threads) {
  if (width != window.sensor_width || height != window.sensor_height) {
    throw Error(ErrorCode::DimensionMismatch,
                "surface " + std::to_string(width) + "x" + std::to_string(height) + " vs sensor " +
                    std::to_string(window.sensor_width) + "x" + std::to_string(window.sensor_height));
  }
  if (window.delta_t == 0 || window.delta_t > kMaxDeltaT) {
    throw Error(ErrorCode::InvalidArgument, "delta_t must lie in (0, 2^32] us");
  }
  LnesSurface surface;
  surface.width = width;
  surface.height = height;
  surface.mode = mode;
  surface.t_end = window.t_end;
  surface.delta_t = window.delta_t;
  surface.values.assign(static_cast<std::size_t>(width) * height * 2, 0.0f);

  const std::size_t n = window.size();
  if (n == 0) return surface;
  const auto& k = simd::kernels();
  const double delta = static_cast<double>(window.delta_t);
  std::vector<float> weights(n);

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(height)));
  if (threads == 1) {
    k.lnes_weights(window.t.data(), n, window.t_end, delta, weights.data());
    scatter_rows(window, weights, width, mode, 0, height, surface.values.data());
    return surface;
  }

  {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (unsigned w = 0; w < threads; ++w) {
      const std::size_t begin = std::min(n, w * chunk);
      const std::size_t end = std::min(n, begin + chunk);
      if (begin == end) break;
      pool.emplace_back([&, begin, end] {
        k.lnes_weights(window.t.data() + begin, end - begin, window.t_end, delta, weights.data() + begin);
      });
    }
  }
  {
    std::vector<std::jthread> pool;
    const int band = (height + static_cast<int>(threads) - 1) / static_cast<int>(threads);
    for (unsigned w = 0; w < threads; ++w) {
      const int row_begin = std::min(height, static_cast<int>(w) * band);
      const int row_end = std::min(height, row_begin + band);
      if (row_begin == row_end) break;
      pool.emplace_back([&, row_begin, row_end] {
        scatter_rows(window, weights, width, mode, row_begin, row_end, surface.values.data());
      });
    }
  }
  return surface;
}

std::vector<std::uint8_t> write_lnes(const LnesSurface& surface) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + surface.values.size() * 4);
  io::ByteWriter w(out);
  w.bytes("LNS1", 4);
  w.le(static_cast<std::uint16_t>(surface.width));
  w.le(static_cast<std::uint16_t>(surface.height));
  w.le(static_cast<std::uint8_t>(surface.mode));
  w.le(std::uint8_t{0});
  w.le(static_cast<std::uint64_t>(surface.t_end));
  w.le(static_cast<std::uint64_t>(surface.delta_t));
  for (float v : surface.values) w.f32(v);
  return out;
}

LnesSurface parse_lnes(std::span<const std::uint8_t> bytes) {
  io::ByteReader in(bytes);
  if (!in.magic("LNS1") || !in.has(kHeaderSize - 4)) throw Error(ErrorCode::MalformedHeader, "not an LNS1 file");
  LnesSurface s;
  s.width = in.le<std::uint16_t>();
  s.height = in.le<std::uint16_t>();
  const auto mode = in.le<std::uint8_t>();
  if (mode > 1) throw Error(ErrorCode::MalformedHeader, "unknown LNES mode");
  s.mode = static_cast<LnesMode>(mode);
  in.le<std::uint8_t>();
  s.t_end = in.le<std::uint64_t>();
  s.delta_t = in.le<std::uint64_t>();
  const std::size_t count = static_cast<std::size_t>(s.width) * s.height * 2;
  if (in.remaining() != count * 4) throw Error(ErrorCode::TruncatedRecord, "payload size mismatch");
  s.values.resize(count);
  for (auto& v : s.values) v = in.f32();
  return s;
}

}  // namespace egohand
