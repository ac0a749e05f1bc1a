#include <atomic>

#include "egohand/common.hpp"
#include "simd/kernels_internal.hpp"

namespace egohand::simd {
namespace {

std::atomic<int>& selected() {
  static std::atomic<int> isa{static_cast<int>(detected_isa())};
  return isa;
}

}  // namespace

const char* to_string(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if EGOHAND_HAVE_AVX2
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

Isa detected_isa() { return isa_supported(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar; }

Isa active_isa() { return static_cast<Isa>(selected().load(std::memory_order_relaxed)); }

void set_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw Error(ErrorCode::InvalidArgument, std::string("instruction set not available: ") + to_string(isa));
  }
  selected().store(static_cast<int>(isa), std::memory_order_relaxed);
}

const KernelTable& kernels_for(Isa isa) {
#if EGOHAND_HAVE_AVX2
  if (isa == Isa::Avx2 && isa_supported(Isa::Avx2)) return detail::avx2_table();
#endif
  if (isa != Isa::Scalar) {
    throw Error(ErrorCode::InvalidArgument, std::string("instruction set not available: ") + to_string(isa));
  }
  return detail::scalar_table();
}

const KernelTable& kernels() { return kernels_for(active_isa()); }

}  // namespace egohand::simd
