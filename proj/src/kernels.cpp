#include "deproj/kernels.hpp"

#include <cmath>

#include "kernels_table.hpp"

namespace deproj::kernels {

namespace detail {

namespace {

float s_dot(const float* a, const float* b, std::size_t n) {
    float acc = 0.0f;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void s_axpy(float alpha, const float* x, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void s_scale(float alpha, float* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

float s_sum(const float* x, std::size_t n) {
    float acc = 0.0f;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

float s_sumsq_diff(const float* a, const float* b, std::size_t n) {
    float acc = 0.0f;
    for (std::size_t i = 0; i < n; ++i) {
        const float d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

void s_diff_accum(float c, const float* a, const float* b, float* g, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) g[i] += c * (a[i] - b[i]);
}

void s_leaky_relu(const float* x, float* y, std::size_t n, float slope) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] >= 0.0f ? x[i] : slope * x[i];
}

void s_leaky_relu_grad(const float* x, const float* gy, float* gx, std::size_t n, float slope) {
    for (std::size_t i = 0; i < n; ++i) gx[i] += gy[i] * (x[i] >= 0.0f ? 1.0f : slope);
}

void s_clamp(const float* x, float* y, std::size_t n, float lo, float hi) {
    for (std::size_t i = 0; i < n; ++i) {
        const float v = x[i];
        y[i] = v < lo ? lo : (v > hi ? hi : v);
    }
}

void s_adam_update(float* p, const float* g, float* m, float* v, std::size_t n,
                   float lr, float beta1, float beta2, float eps,
                   float bias1, float bias2) {
    const float om1 = 1.0f - beta1;
    const float om2 = 1.0f - beta2;
    const float inv1 = 1.0f / bias1;
    const float inv2 = 1.0f / bias2;
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + om1 * g[i];
        v[i] = beta2 * v[i] + om2 * g[i] * g[i];
        const float mhat = m[i] * inv1;
        const float vhat = v[i] * inv2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

} // namespace

const KernelTable& scalar_table() {
    static const KernelTable t = {
        s_dot,  s_axpy,       s_scale,           s_sum,   s_sumsq_diff,
        s_diff_accum, s_leaky_relu, s_leaky_relu_grad, s_clamp, s_adam_update,
    };
    return t;
}

namespace {

struct Dispatch {
    const KernelTable* table;
    Backend backend;

    Dispatch() {
#if defined(DEPROJ_HAVE_AVX2_TU)
        if (avx2_supported()) {
            table = &avx2_table();
            backend = Backend::avx2;
            return;
        }
#endif
#if defined(DEPROJ_HAVE_NEON_TU)
        table = &neon_table();
        backend = Backend::neon;
        return;
#endif
        table = &scalar_table();
        backend = Backend::scalar;
    }
};

Dispatch& dispatch() {
    static Dispatch d;
    return d;
}

} // namespace

} // namespace detail

const char* name(Backend b) {
    switch (b) {
        case Backend::scalar: return "scalar";
        case Backend::avx2: return "avx2";
        case Backend::neon: return "neon";
    }
    return "unknown";
}

Backend active() { return detail::dispatch().backend; }

bool select(Backend b) {
    using detail::dispatch;
    switch (b) {
        case Backend::scalar:
            dispatch().table = &detail::scalar_table();
            dispatch().backend = Backend::scalar;
            return true;
        case Backend::avx2:
#if defined(DEPROJ_HAVE_AVX2_TU)
            if (detail::avx2_supported()) {
                dispatch().table = &detail::avx2_table();
                dispatch().backend = Backend::avx2;
                return true;
            }
#endif
            return false;
        case Backend::neon:
#if defined(DEPROJ_HAVE_NEON_TU)
            dispatch().table = &detail::neon_table();
            dispatch().backend = Backend::neon;
            return true;
#else
            return false;
#endif
    }
    return false;
}

std::vector<Backend> available() {
    std::vector<Backend> out{Backend::scalar};
#if defined(DEPROJ_HAVE_AVX2_TU)
    if (detail::avx2_supported()) out.push_back(Backend::avx2);
#endif
#if defined(DEPROJ_HAVE_NEON_TU)
    out.push_back(Backend::neon);
#endif
    return out;
}

float dot(const float* a, const float* b, std::size_t n) {
    return detail::dispatch().table->dot(a, b, n);
}
void axpy(float alpha, const float* x, float* y, std::size_t n) {
    detail::dispatch().table->axpy(alpha, x, y, n);
}
void scale(float alpha, float* x, std::size_t n) {
    detail::dispatch().table->scale(alpha, x, n);
}
float sum(const float* x, std::size_t n) { return detail::dispatch().table->sum(x, n); }
float sumsq_diff(const float* a, const float* b, std::size_t n) {
    return detail::dispatch().table->sumsq_diff(a, b, n);
}
void diff_accum(float c, const float* a, const float* b, float* g, std::size_t n) {
    detail::dispatch().table->diff_accum(c, a, b, g, n);
}
void leaky_relu(const float* x, float* y, std::size_t n, float slope) {
    detail::dispatch().table->leaky_relu(x, y, n, slope);
}
void leaky_relu_grad(const float* x, const float* gy, float* gx, std::size_t n, float slope) {
    detail::dispatch().table->leaky_relu_grad(x, gy, gx, n, slope);
}
void clamp(const float* x, float* y, std::size_t n, float lo, float hi) {
    detail::dispatch().table->clamp(x, y, n, lo, hi);
}
void adam_update(float* p, const float* g, float* m, float* v, std::size_t n,
                 float lr, float beta1, float beta2, float eps,
                 float bias1, float bias2) {
    detail::dispatch().table->adam_update(p, g, m, v, n, lr, beta1, beta2, eps, bias1, bias2);
}

// Double versions stay scalar: they back the gradient-check shadow mode,
// where precision matters and throughput does not.

double dot(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}
void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}
void scale(double alpha, double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}
double sum(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}
double sumsq_diff(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}
void diff_accum(double c, const double* a, const double* b, double* g, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) g[i] += c * (a[i] - b[i]);
}
void leaky_relu(const double* x, double* y, std::size_t n, double slope) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] >= 0.0 ? x[i] : slope * x[i];
}
void leaky_relu_grad(const double* x, const double* gy, double* gx, std::size_t n, double slope) {
    for (std::size_t i = 0; i < n; ++i) gx[i] += gy[i] * (x[i] >= 0.0 ? 1.0 : slope);
}
void clamp(const double* x, double* y, std::size_t n, double lo, double hi) {
    for (std::size_t i = 0; i < n; ++i) {
        const double v = x[i];
        y[i] = v < lo ? lo : (v > hi ? hi : v);
    }
}

} // namespace deproj::kernels
