#include <algorithm>
#include <cmath>

#include "simd/kernels_internal.hpp"

namespace egohand::simd::detail {
namespace {

void lnes_weights_scalar(const std::uint64_t* t, std::size_t n, std::uint64_t t_end,
                         double delta_t, float* out) {
  for (std::size_t i = 0; i < n; ++i) {
    const double age = static_cast<double>(t_end - t[i]);
    const double w = 1.0 - age / delta_t;
    out[i] = static_cast<float>(w > 0.0 ? w : 0.0);
  }
}

SoftmaxMoments softmax_moments_scalar(const float* values, int width, int height, double peak,
                                      double inv_temperature) {
  SoftmaxMoments m;
  const double floor_weight = std::exp(-peak * inv_temperature);
  for (int y = 0; y < height; ++y) {
    const float* row = values + static_cast<std::size_t>(y) * width;
    double row_mass = 0.0;
    double row_x = 0.0;
    for (int x = 0; x < width; ++x) {
      double w = std::exp((static_cast<double>(row[x]) - peak) * inv_temperature) - floor_weight;
      w = w > 0.0 ? w : 0.0;
      row_mass += w;
      row_x += w * x;
    }
    m.mass += row_mass;
    m.sum_x += row_x;
    m.sum_y += row_mass * y;
  }
  return m;
}

void exp_array_scalar(const double* in, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = in[i] < -708.0 ? 0.0 : std::exp(in[i]);
  }
}

void outer_product_row_scalar(float* out, const double* row, double scale, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(scale * row[i]);
}

double sum_squared_diff_scalar(const float* a, const float* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{
      lnes_weights_scalar, softmax_moments_scalar, exp_array_scalar, outer_product_row_scalar,
      sum_squared_diff_scalar,
  };
  return table;
}

}  // namespace egohand::simd::detail
