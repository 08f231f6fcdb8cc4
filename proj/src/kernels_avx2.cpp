// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma and only entered after a runtime CPU check, so the rest of
// the binary stays runnable on older x86-64 parts.

#include "kernels_table.hpp"

#if defined(DEPROJ_HAVE_AVX2_TU)

#include <immintrin.h>

#include <cmath>

namespace deproj::kernels::detail {

namespace {

inline float hsum256(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_hadd_ps(lo, lo);
    lo = _mm_hadd_ps(lo, lo);
    return _mm_cvtss_f32(lo);
}

float a_dot(const float* a, const float* b, std::size_t n) {
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
        acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
    }
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    }
    float acc = hsum256(_mm256_add_ps(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void a_axpy(float alpha, const float* x, float* y, std::size_t n) {
    const __m256 av = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 yv = _mm256_loadu_ps(y + i);
        yv = _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), yv);
        _mm256_storeu_ps(y + i, yv);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void a_scale(float alpha, float* x, std::size_t n) {
    const __m256 av = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(x + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
    }
    for (; i < n; ++i) x[i] *= alpha;
}

float a_sum(const float* x, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    float out = hsum256(acc);
    for (; i < n; ++i) out += x[i];
    return out;
}

float a_sumsq_diff(const float* a, const float* b, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
        acc = _mm256_fmadd_ps(d, d, acc);
    }
    float out = hsum256(acc);
    for (; i < n; ++i) {
        const float d = a[i] - b[i];
        out += d * d;
    }
    return out;
}

void a_diff_accum(float c, const float* a, const float* b, float* g, std::size_t n) {
    const __m256 cv = _mm256_set1_ps(c);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
        __m256 gv = _mm256_loadu_ps(g + i);
        gv = _mm256_fmadd_ps(cv, d, gv);
        _mm256_storeu_ps(g + i, gv);
    }
    for (; i < n; ++i) g[i] += c * (a[i] - b[i]);
}

void a_leaky_relu(const float* x, float* y, std::size_t n, float slope) {
    const __m256 sv = _mm256_set1_ps(slope);
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 xv = _mm256_loadu_ps(x + i);
        const __m256 mask = _mm256_cmp_ps(xv, zero, _CMP_GE_OQ);
        _mm256_storeu_ps(y + i, _mm256_blendv_ps(_mm256_mul_ps(sv, xv), xv, mask));
    }
    for (; i < n; ++i) y[i] = x[i] >= 0.0f ? x[i] : slope * x[i];
}

void a_leaky_relu_grad(const float* x, const float* gy, float* gx, std::size_t n, float slope) {
    const __m256 sv = _mm256_set1_ps(slope);
    const __m256 one = _mm256_set1_ps(1.0f);
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 xv = _mm256_loadu_ps(x + i);
        const __m256 mask = _mm256_cmp_ps(xv, zero, _CMP_GE_OQ);
        const __m256 factor = _mm256_blendv_ps(sv, one, mask);
        __m256 gv = _mm256_loadu_ps(gx + i);
        gv = _mm256_fmadd_ps(_mm256_loadu_ps(gy + i), factor, gv);
        _mm256_storeu_ps(gx + i, gv);
    }
    for (; i < n; ++i) gx[i] += gy[i] * (x[i] >= 0.0f ? 1.0f : slope);
}

void a_clamp(const float* x, float* y, std::size_t n, float lo, float hi) {
    const __m256 lov = _mm256_set1_ps(lo);
    const __m256 hiv = _mm256_set1_ps(hi);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 v = _mm256_loadu_ps(x + i);
        v = _mm256_max_ps(v, lov);
        v = _mm256_min_ps(v, hiv);
        _mm256_storeu_ps(y + i, v);
    }
    for (; i < n; ++i) {
        const float v = x[i];
        y[i] = v < lo ? lo : (v > hi ? hi : v);
    }
}

void a_adam_update(float* p, const float* g, float* m, float* v, std::size_t n,
                   float lr, float beta1, float beta2, float eps,
                   float bias1, float bias2) {
    const __m256 b1 = _mm256_set1_ps(beta1);
    const __m256 b2 = _mm256_set1_ps(beta2);
    const __m256 om1 = _mm256_set1_ps(1.0f - beta1);
    const __m256 om2 = _mm256_set1_ps(1.0f - beta2);
    const __m256 inv1 = _mm256_set1_ps(1.0f / bias1);
    const __m256 inv2 = _mm256_set1_ps(1.0f / bias2);
    const __m256 lrv = _mm256_set1_ps(lr);
    const __m256 epsv = _mm256_set1_ps(eps);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 gv = _mm256_loadu_ps(g + i);
        __m256 mv = _mm256_loadu_ps(m + i);
        __m256 vv = _mm256_loadu_ps(v + i);
        mv = _mm256_fmadd_ps(b1, mv, _mm256_mul_ps(om1, gv));
        vv = _mm256_fmadd_ps(b2, vv, _mm256_mul_ps(om2, _mm256_mul_ps(gv, gv)));
        _mm256_storeu_ps(m + i, mv);
        _mm256_storeu_ps(v + i, vv);
        const __m256 mhat = _mm256_mul_ps(mv, inv1);
        const __m256 vhat = _mm256_mul_ps(vv, inv2);
        const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), epsv);
        const __m256 step = _mm256_div_ps(_mm256_mul_ps(lrv, mhat), denom);
        _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), step));
    }
    const float som1 = 1.0f - beta1;
    const float som2 = 1.0f - beta2;
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + som1 * g[i];
        v[i] = beta2 * v[i] + som2 * g[i] * g[i];
        const float mhat = m[i] / bias1;
        const float vhat = v[i] / bias2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

} // namespace

const KernelTable& avx2_table() {
    static const KernelTable t = {
        a_dot,  a_axpy,       a_scale,           a_sum,   a_sumsq_diff,
        a_diff_accum, a_leaky_relu, a_leaky_relu_grad, a_clamp, a_adam_update,
    };
    return t;
}

bool avx2_supported() {
#if defined(__GNUC__) || defined(__clang__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

} // namespace deproj::kernels::detail

#endif // DEPROJ_HAVE_AVX2_TU
