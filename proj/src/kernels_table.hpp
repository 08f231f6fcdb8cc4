#pragma once

#include <cstddef>

// Internal dispatch table shared by the kernel translation units.

namespace deproj::kernels::detail {

struct KernelTable {
    float (*dot)(const float*, const float*, std::size_t);
    void (*axpy)(float, const float*, float*, std::size_t);
    void (*scale)(float, float*, std::size_t);
    float (*sum)(const float*, std::size_t);
    float (*sumsq_diff)(const float*, const float*, std::size_t);
    void (*diff_accum)(float, const float*, const float*, float*, std::size_t);
    void (*leaky_relu)(const float*, float*, std::size_t, float);
    void (*leaky_relu_grad)(const float*, const float*, float*, std::size_t, float);
    void (*clamp)(const float*, float*, std::size_t, float, float);
    void (*adam_update)(float*, const float*, float*, float*, std::size_t,
                        float, float, float, float, float, float);
};

const KernelTable& scalar_table();

#if defined(DEPROJ_HAVE_AVX2_TU)
const KernelTable& avx2_table();
bool avx2_supported();
#endif

#if defined(DEPROJ_HAVE_NEON_TU)
const KernelTable& neon_table();
#endif

} // namespace deproj::kernels::detail
