#pragma once
// Data-parallel inner loops shared by the event, heatmap and loss modules.
//
// Every kernel has a scalar reference implementation; wider variants are
// selected at runtime from the CPU feature set. lnes_weights and
// outer_product_row are bit-identical across variants. The reductions and
// exp-based kernels agree to within a few ulp (tested).

#include <cstddef>
#include <cstdint>

namespace egohand::simd {

enum class Isa { Scalar, Avx2 };

const char* to_string(Isa isa);

/// True if this binary carries the variant and the running CPU supports it.
bool isa_supported(Isa isa);

/// Widest supported variant.
Isa detected_isa();

/// Currently selected variant (defaults to detected_isa()).
Isa active_isa();

/// Overrides the selected variant. Throws egohand::Error if unsupported.
void set_isa(Isa isa);

struct SoftmaxMoments {
  double mass = 0.0;
  double sum_x = 0.0;
  double sum_y = 0.0;
};

struct KernelTable {
  // out[i] = max(0, 1 - (t_end - t[i]) / delta_t) rounded to float.
  // Requires t[i] <= t_end and t_end - t[i] < 2^52.
  void (*lnes_weights)(const std::uint64_t* t, std::size_t n, std::uint64_t t_end, double delta_t,
                       float* out);

  // Baseline-subtracted softmax moments over a row-major width x height grid:
  //   w = max(0, exp((v - peak) * inv_temperature) - exp(-peak * inv_temperature))
  // accumulating (sum w, sum w*x, sum w*y) with x,y the node indices.
  SoftmaxMoments (*softmax_moments)(const float* values, int width, int height, double peak,
                                    double inv_temperature);

  // out[i] = exp(in[i]); inputs below ~-708 flush to zero.
  void (*exp_array)(const double* in, double* out, std::size_t n);

  // out[i] = float(scale * row[i])
  void (*outer_product_row)(float* out, const double* row, double scale, std::size_t n);

  // sum over i of (a[i] - b[i])^2, accumulated in double.
  double (*sum_squared_diff)(const float* a, const float* b, std::size_t n);
};

const KernelTable& kernels();
const KernelTable& kernels_for(Isa isa);

}  // namespace egohand::simd
