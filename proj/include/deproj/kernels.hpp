#pragma once

#include <cstddef>
#include <vector>

// Data-parallel inner-loop primitives behind the tensor and optimizer code.
// Scalar reference implementations always exist; AVX2 (x86) and NEON
// (aarch64) variants are selected at runtime when the CPU supports them.
// The selected backend is fixed for the process unless select() is called,
// so repeated runs on one machine produce identical results.

namespace deproj::kernels {

enum class Backend { scalar, avx2, neon };

const char* name(Backend b);

// Currently active backend. The first query picks the best available one.
Backend active();

// Force a backend; returns false (and leaves the active backend unchanged)
// if it was not compiled in or the CPU lacks the feature.
bool select(Backend b);

std::vector<Backend> available();

// ---- float kernels (dispatched) ----

float dot(const float* a, const float* b, std::size_t n);

// y += alpha * x
void axpy(float alpha, const float* x, float* y, std::size_t n);

// x *= alpha
void scale(float alpha, float* x, std::size_t n);

float sum(const float* x, std::size_t n);

// sum_i (a_i - b_i)^2
float sumsq_diff(const float* a, const float* b, std::size_t n);

// g += c * (a - b)
void diff_accum(float c, const float* a, const float* b, float* g, std::size_t n);

// y_i = x_i >= 0 ? x_i : slope * x_i
void leaky_relu(const float* x, float* y, std::size_t n, float slope);

// gx += gy * (x >= 0 ? 1 : slope)   (subgradient at 0 is 1)
void leaky_relu_grad(const float* x, const float* gy, float* gx, std::size_t n, float slope);

void clamp(const float* x, float* y, std::size_t n, float lo, float hi);

// Bias-corrected Adam update for one parameter tensor.
// bias1 = 1 - beta1^t, bias2 = 1 - beta2^t for the step being applied.
void adam_update(float* p, const float* g, float* m, float* v, std::size_t n,
                 float lr, float beta1, float beta2, float eps,
                 float bias1, float bias2);

// ---- double kernels (always scalar; used by the 64-bit shadow path) ----

double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, double* x, std::size_t n);
double sum(const double* x, std::size_t n);
double sumsq_diff(const double* a, const double* b, std::size_t n);
void diff_accum(double c, const double* a, const double* b, double* g, std::size_t n);
void leaky_relu(const double* x, double* y, std::size_t n, double slope);
void leaky_relu_grad(const double* x, const double* gy, double* gx, std::size_t n, double slope);
void clamp(const double* x, double* y, std::size_t n, double lo, double hi);

} // namespace deproj::kernels
