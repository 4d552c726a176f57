#pragma once

#include "sls_robust/kernels.hpp"

namespace sls::kernels::detail {

const KernelTable& scalar_table_impl();

#if defined(SLS_ROBUST_HAS_AVX2)
const KernelTable& avx2_table_impl();
#endif

}  // namespace sls::kernels::detail
