#pragma once

#include "egohand/simd/kernels.hpp"

namespace egohand::simd::detail {

const KernelTable& scalar_table();
#if EGOHAND_HAVE_AVX2
const KernelTable& avx2_table();
#endif

}  // namespace egohand::simd::detail
