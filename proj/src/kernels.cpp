#include "awda/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "awda/util.hpp"

namespace awda::kernels {

namespace {

inline float clamp01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

inline float pixel_uniform(std::uint64_t seed, std::uint64_t idx) {
    std::uint64_t s = seed ^ (idx * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
    std::uint64_t z = splitmix64(s);
    return static_cast<float>(static_cast<double>(z >> 11) * 0x1.0p-53);
}

}  // namespace

// ---------------------------------------------------------------------------
// matmul

#define AWDA_MM_NN_BODY(i)                                        \
    {                                                             \
        double* crow = c + static_cast<std::size_t>(i) * n;       \
        if (!accumulate)                                          \
            for (int j = 0; j < n; ++j) crow[j] = 0.0;            \
        const double* arow = a + static_cast<std::size_t>(i) * k; \
        for (int p = 0; p < k; ++p) {                             \
            double aip = arow[p];                                 \
            const double* brow = b + static_cast<std::size_t>(p) * n; \
            for (int j = 0; j < n; ++j) crow[j] += aip * brow[j]; \
        }                                                         \
    }

void mm_nn_serial(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) AWDA_MM_NN_BODY(i)
}

void mm_nn_parallel(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) AWDA_MM_NN_BODY(i)
}

#define AWDA_MM_NT_BODY(i)                                            \
    {                                                                 \
        const double* arow = a + static_cast<std::size_t>(i) * k;     \
        double* crow = c + static_cast<std::size_t>(i) * n;           \
        for (int j = 0; j < n; ++j) {                                 \
            const double* brow = b + static_cast<std::size_t>(j) * k; \
            double acc = 0.0;                                         \
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];     \
            crow[j] = accumulate ? crow[j] + acc : acc;               \
        }                                                             \
    }

void mm_nt_serial(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) AWDA_MM_NT_BODY(i)
}

void mm_nt_parallel(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) AWDA_MM_NT_BODY(i)
}

#define AWDA_MM_TN_BODY(i)                                                \
    {                                                                     \
        double* crow = c + static_cast<std::size_t>(i) * n;               \
        for (int j = 0; j < n; ++j) {                                     \
            double acc = 0.0;                                             \
            for (int p = 0; p < k; ++p)                                   \
                acc += a[static_cast<std::size_t>(p) * m + i] *           \
                       b[static_cast<std::size_t>(p) * n + j];            \
            crow[j] = accumulate ? crow[j] + acc : acc;                   \
        }                                                                 \
    }

void mm_tn_serial(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) AWDA_MM_TN_BODY(i)
}

void mm_tn_parallel(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) AWDA_MM_TN_BODY(i)
}

#ifdef _OPENMP
// Parallel pays off only past a few thousand output elements.
static constexpr long kParallelThreshold = 4096;
#endif

void mm_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
#ifdef _OPENMP
    if (static_cast<long>(m) * n >= kParallelThreshold) {
        mm_nn_parallel(a, b, c, m, k, n, accumulate);
        return;
    }
#endif
    mm_nn_serial(a, b, c, m, k, n, accumulate);
}

void mm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
#ifdef _OPENMP
    if (static_cast<long>(m) * n >= kParallelThreshold) {
        mm_nt_parallel(a, b, c, m, k, n, accumulate);
        return;
    }
#endif
    mm_nt_serial(a, b, c, m, k, n, accumulate);
}

void mm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
#ifdef _OPENMP
    if (static_cast<long>(m) * n >= kParallelThreshold) {
        mm_tn_parallel(a, b, c, m, k, n, accumulate);
        return;
    }
#endif
    mm_tn_serial(a, b, c, m, k, n, accumulate);
}

// ---------------------------------------------------------------------------
// pixel kernels

#define AWDA_HAZE_BODY(i)                                             \
    {                                                                 \
        float ti = t[i];                                              \
        for (int ch = 0; ch < 3; ++ch)                                \
            out[3 * i + ch] = clamp01(img[3 * i + ch] * ti + a_light[ch] * (1.0f - ti)); \
    }

void haze_serial(const float* img, const float* t, const float a_light[3], float* out, int n_px) {
    for (int i = 0; i < n_px; ++i) AWDA_HAZE_BODY(i)
}

void haze_parallel(const float* img, const float* t, const float a_light[3], float* out, int n_px) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n_px; ++i) AWDA_HAZE_BODY(i)
}

void haze(const float* img, const float* t, const float a_light[3], float* out, int n_px) {
#ifdef _OPENMP
    haze_parallel(img, t, a_light, out, n_px);
#else
    haze_serial(img, t, a_light, out, n_px);
#endif
}

#define AWDA_NIGHT_BODY(i)                                            \
    {                                                                 \
        for (int ch = 0; ch < 3; ++ch) {                              \
            float v = img[3 * i + ch];                                \
            out[3 * i + ch] = clamp01(gain * std::pow(v, gamma) + shift[ch]); \
        }                                                             \
    }

void night_serial(const float* img, float gamma, float gain, const float shift[3], float* out, int n_px) {
    for (int i = 0; i < n_px; ++i) AWDA_NIGHT_BODY(i)
}

void night_parallel(const float* img, float gamma, float gain, const float shift[3], float* out, int n_px) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n_px; ++i) AWDA_NIGHT_BODY(i)
}

void night(const float* img, float gamma, float gain, const float shift[3], float* out, int n_px) {
#ifdef _OPENMP
    night_parallel(img, gamma, gain, shift, out, n_px);
#else
    night_serial(img, gamma, gain, shift, out, n_px);
#endif
}

#define AWDA_BLEND_BODY(i)                                            \
    {                                                                 \
        float s = layer[i];                                           \
        for (int ch = 0; ch < 3; ++ch)                                \
            out[3 * i + ch] = clamp01((1.0f - alpha) * img[3 * i + ch] + alpha * s); \
    }

void blend_serial(const float* img, const float* layer, float alpha, float* out, int n_px) {
    for (int i = 0; i < n_px; ++i) AWDA_BLEND_BODY(i)
}

void blend_parallel(const float* img, const float* layer, float alpha, float* out, int n_px) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n_px; ++i) AWDA_BLEND_BODY(i)
}

void blend(const float* img, const float* layer, float alpha, float* out, int n_px) {
#ifdef _OPENMP
    blend_parallel(img, layer, alpha, out, n_px);
#else
    blend_serial(img, layer, alpha, out, n_px);
#endif
}

#define AWDA_CONV_BODY(y)                                             \
    {                                                                 \
        int r = k / 2;                                                \
        for (int x = 0; x < w; ++x) {                                 \
            float acc = 0.0f;                                         \
            for (int dy = -r; dy <= r; ++dy) {                        \
                int sy = y + dy;                                      \
                if (sy < 0 || sy >= h) continue;                      \
                for (int dx = -r; dx <= r; ++dx) {                    \
                    int sx = x + dx;                                  \
                    if (sx < 0 || sx >= w) continue;                  \
                    acc += src[sy * w + sx] * kernel[(dy + r) * k + (dx + r)]; \
                }                                                     \
            }                                                         \
            dst[y * w + x] = acc;                                     \
        }                                                             \
    }

void conv2d_serial(const float* src, int h, int w, const float* kernel, int k, float* dst) {
    for (int y = 0; y < h; ++y) AWDA_CONV_BODY(y)
}

void conv2d_parallel(const float* src, int h, int w, const float* kernel, int k, float* dst) {
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) AWDA_CONV_BODY(y)
}

void conv2d(const float* src, int h, int w, const float* kernel, int k, float* dst) {
#ifdef _OPENMP
    conv2d_parallel(src, h, w, kernel, k, dst);
#else
    conv2d_serial(src, h, w, kernel, k, dst);
#endif
}

void rain_noise_serial(std::uint64_t seed, float rho, float* layer, int n_px) {
    for (int i = 0; i < n_px; ++i)
        layer[i] = pixel_uniform(seed, static_cast<std::uint64_t>(i)) < rho ? 1.0f : 0.0f;
}

void rain_noise_parallel(std::uint64_t seed, float rho, float* layer, int n_px) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n_px; ++i)
        layer[i] = pixel_uniform(seed, static_cast<std::uint64_t>(i)) < rho ? 1.0f : 0.0f;
}

void rain_noise(std::uint64_t seed, float rho, float* layer, int n_px) {
#ifdef _OPENMP
    rain_noise_parallel(seed, rho, layer, n_px);
#else
    rain_noise_serial(seed, rho, layer, n_px);
#endif
}

void exp_transmission_serial(const float* dnorm, float beta, float* t, int n_px) {
    for (int i = 0; i < n_px; ++i) t[i] = std::exp(-beta * dnorm[i]);
}

void exp_transmission_parallel(const float* dnorm, float beta, float* t, int n_px) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n_px; ++i) t[i] = std::exp(-beta * dnorm[i]);
}

void exp_transmission(const float* dnorm, float beta, float* t, int n_px) {
#ifdef _OPENMP
    exp_transmission_parallel(dnorm, beta, t, n_px);
#else
    exp_transmission_serial(dnorm, beta, t, n_px);
#endif
}

}  // namespace awda::kernels
