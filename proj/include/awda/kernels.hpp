#pragma once

#include <cstdint>

// Data-parallel inner loops, each in a serial and an OpenMP variant. The two
// variants compute every output element with identical operation order, so
// they agree bitwise; tests pin that and the bench tool compares timings.
namespace awda::kernels {

// C(m x n) = A(m x k) * B(k x n), row-major. accumulate=false overwrites C.
void mm_nn_serial(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void mm_nn_parallel(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void mm_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);

// C(m x n) (+)= A(m x k) * B(n x k)^T
void mm_nt_serial(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void mm_nt_parallel(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void mm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);

// C(m x n) (+)= A(k x m)^T * B(k x n)
void mm_tn_serial(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void mm_tn_parallel(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void mm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);

// out[3i+c] = clamp01(img[3i+c] * t[i] + A[c] * (1 - t[i])), i < n_px.
void haze_serial(const float* img, const float* t, const float a_light[3], float* out, int n_px);
void haze_parallel(const float* img, const float* t, const float a_light[3], float* out, int n_px);
void haze(const float* img, const float* t, const float a_light[3], float* out, int n_px);

// out[3i+c] = clamp01(gain * img[3i+c]^gamma + shift[c])
void night_serial(const float* img, float gamma, float gain, const float shift[3], float* out, int n_px);
void night_parallel(const float* img, float gamma, float gain, const float shift[3], float* out, int n_px);
void night(const float* img, float gamma, float gain, const float shift[3], float* out, int n_px);

// out[3i+c] = clamp01((1-alpha) * img[3i+c] + alpha * layer[i])
void blend_serial(const float* img, const float* layer, float alpha, float* out, int n_px);
void blend_parallel(const float* img, const float* layer, float alpha, float* out, int n_px);
void blend(const float* img, const float* layer, float alpha, float* out, int n_px);

// Single-channel same-size convolution with zero padding, k odd.
void conv2d_serial(const float* src, int h, int w, const float* kernel, int k, float* dst);
void conv2d_parallel(const float* src, int h, int w, const float* kernel, int k, float* dst);
void conv2d(const float* src, int h, int w, const float* kernel, int k, float* dst);

// Bernoulli(rho) noise layer seeded per pixel from (seed, pixel index);
// counter-based, so the parallel variant is deterministic.
void rain_noise_serial(std::uint64_t seed, float rho, float* layer, int n_px);
void rain_noise_parallel(std::uint64_t seed, float rho, float* layer, int n_px);
void rain_noise(std::uint64_t seed, float rho, float* layer, int n_px);

// t[i] = exp(-beta * dnorm[i])
void exp_transmission_serial(const float* dnorm, float beta, float* t, int n_px);
void exp_transmission_parallel(const float* dnorm, float beta, float* t, int n_px);
void exp_transmission(const float* dnorm, float beta, float* t, int n_px);

}  // namespace awda::kernels
