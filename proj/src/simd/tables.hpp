#pragma once

#include "lesiontl/simd/kernels.hpp"

namespace lesiontl::simd::detail {

const KernelTable& scalar_table();

// nullptr when the AVX2 variants were not compiled for this target.
const KernelTable* avx2_table();

}  // namespace lesiontl::simd::detail
