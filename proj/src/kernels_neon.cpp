// NEON kernel variants for aarch64. NEON is baseline on that architecture,
// so no runtime feature probe is needed.

#include "kernels_table.hpp"

#if defined(DEPROJ_HAVE_NEON_TU)

#include <arm_neon.h>

#include <cmath>

namespace deproj::kernels::detail {

namespace {

inline float hsum128(float32x4_t v) { return vaddvq_f32(v); }

float n_dot(const float* a, const float* b, std::size_t n) {
    float32x4_t acc = vdupq_n_f32(0.0f);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = vfmaq_f32(acc, vld1q_f32(a + i), vld1q_f32(b + i));
    }
    float out = hsum128(acc);
    for (; i < n; ++i) out += a[i] * b[i];
    return out;
}

void n_axpy(float alpha, const float* x, float* y, std::size_t n) {
    const float32x4_t av = vdupq_n_f32(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float32x4_t yv = vld1q_f32(y + i);
        yv = vfmaq_f32(yv, av, vld1q_f32(x + i));
        vst1q_f32(y + i, yv);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void n_scale(float alpha, float* x, std::size_t n) {
    const float32x4_t av = vdupq_n_f32(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) vst1q_f32(x + i, vmulq_f32(av, vld1q_f32(x + i)));
    for (; i < n; ++i) x[i] *= alpha;
}

float n_sum(const float* x, std::size_t n) {
    float32x4_t acc = vdupq_n_f32(0.0f);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = vaddq_f32(acc, vld1q_f32(x + i));
    float out = hsum128(acc);
    for (; i < n; ++i) out += x[i];
    return out;
}

float n_sumsq_diff(const float* a, const float* b, std::size_t n) {
    float32x4_t acc = vdupq_n_f32(0.0f);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const float32x4_t d = vsubq_f32(vld1q_f32(a + i), vld1q_f32(b + i));
        acc = vfmaq_f32(acc, d, d);
    }
    float out = hsum128(acc);
    for (; i < n; ++i) {
        const float d = a[i] - b[i];
        out += d * d;
    }
    return out;
}

void n_diff_accum(float c, const float* a, const float* b, float* g, std::size_t n) {
    const float32x4_t cv = vdupq_n_f32(c);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const float32x4_t d = vsubq_f32(vld1q_f32(a + i), vld1q_f32(b + i));
        float32x4_t gv = vld1q_f32(g + i);
        gv = vfmaq_f32(gv, cv, d);
        vst1q_f32(g + i, gv);
    }
    for (; i < n; ++i) g[i] += c * (a[i] - b[i]);
}

void n_leaky_relu(const float* x, float* y, std::size_t n, float slope) {
    const float32x4_t sv = vdupq_n_f32(slope);
    const float32x4_t zero = vdupq_n_f32(0.0f);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const float32x4_t xv = vld1q_f32(x + i);
        const uint32x4_t mask = vcgeq_f32(xv, zero);
        vst1q_f32(y + i, vbslq_f32(mask, xv, vmulq_f32(sv, xv)));
    }
    for (; i < n; ++i) y[i] = x[i] >= 0.0f ? x[i] : slope * x[i];
}

void n_leaky_relu_grad(const float* x, const float* gy, float* gx, std::size_t n, float slope) {
    const float32x4_t sv = vdupq_n_f32(slope);
    const float32x4_t one = vdupq_n_f32(1.0f);
    const float32x4_t zero = vdupq_n_f32(0.0f);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const float32x4_t xv = vld1q_f32(x + i);
        const uint32x4_t mask = vcgeq_f32(xv, zero);
        const float32x4_t factor = vbslq_f32(mask, one, sv);
        float32x4_t gv = vld1q_f32(gx + i);
        gv = vfmaq_f32(gv, vld1q_f32(gy + i), factor);
        vst1q_f32(gx + i, gv);
    }
    for (; i < n; ++i) gx[i] += gy[i] * (x[i] >= 0.0f ? 1.0f : slope);
}

void n_clamp(const float* x, float* y, std::size_t n, float lo, float hi) {
    const float32x4_t lov = vdupq_n_f32(lo);
    const float32x4_t hiv = vdupq_n_f32(hi);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float32x4_t v = vld1q_f32(x + i);
        v = vmaxq_f32(v, lov);
        v = vminq_f32(v, hiv);
        vst1q_f32(y + i, v);
    }
    for (; i < n; ++i) {
        const float v = x[i];
        y[i] = v < lo ? lo : (v > hi ? hi : v);
    }
}

void n_adam_update(float* p, const float* g, float* m, float* v, std::size_t n,
                   float lr, float beta1, float beta2, float eps,
                   float bias1, float bias2) {
    const float32x4_t b1 = vdupq_n_f32(beta1);
    const float32x4_t b2 = vdupq_n_f32(beta2);
    const float32x4_t om1 = vdupq_n_f32(1.0f - beta1);
    const float32x4_t om2 = vdupq_n_f32(1.0f - beta2);
    const float32x4_t inv1 = vdupq_n_f32(1.0f / bias1);
    const float32x4_t inv2 = vdupq_n_f32(1.0f / bias2);
    const float32x4_t lrv = vdupq_n_f32(lr);
    const float32x4_t epsv = vdupq_n_f32(eps);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const float32x4_t gv = vld1q_f32(g + i);
        float32x4_t mv = vld1q_f32(m + i);
        float32x4_t vv = vld1q_f32(v + i);
        mv = vfmaq_f32(vmulq_f32(om1, gv), b1, mv);
        vv = vfmaq_f32(vmulq_f32(om2, vmulq_f32(gv, gv)), b2, vv);
        vst1q_f32(m + i, mv);
        vst1q_f32(v + i, vv);
        const float32x4_t mhat = vmulq_f32(mv, inv1);
        const float32x4_t vhat = vmulq_f32(vv, inv2);
        const float32x4_t denom = vaddq_f32(vsqrtq_f32(vhat), epsv);
        const float32x4_t step = vdivq_f32(vmulq_f32(lrv, mhat), denom);
        vst1q_f32(p + i, vsubq_f32(vld1q_f32(p + i), step));
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

const KernelTable& neon_table() {
    static const KernelTable t = {
        n_dot,  n_axpy,       n_scale,           n_sum,   n_sumsq_diff,
        n_diff_accum, n_leaky_relu, n_leaky_relu_grad, n_clamp, n_adam_update,
    };
    return t;
}

} // namespace deproj::kernels::detail

#endif // DEPROJ_HAVE_NEON_TU
