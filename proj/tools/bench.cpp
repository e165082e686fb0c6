// Serial vs OpenMP kernel timings. The two variants are bitwise identical by
// construction; this compares throughput only.

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "awda/kernels.hpp"
#include "awda/util.hpp"

namespace {

using clk = std::chrono::steady_clock;

double time_ms(int reps, const std::function<void()>& fn) {
    fn();  // warm up
    auto t0 = clk::now();
    for (int i = 0; i < reps; ++i) fn();
    return std::chrono::duration<double, std::milli>(clk::now() - t0).count() / reps;
}

void report(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-18s serial %8.3f ms   parallel %8.3f ms   speedup %.2fx\n", name, serial_ms,
                parallel_ms, serial_ms / parallel_ms);
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP; parallel variants run serially\n");
#endif

    awda::RngStream rng(7);

    {
        const int h = 1080, w = 1920, n = h * w;
        std::vector<float> img(n * 3), t(n), out(n * 3);
        for (auto& v : img) v = static_cast<float>(rng.next_double());
        for (auto& v : t) v = static_cast<float>(rng.next_double());
        const float a[3] = {0.9f, 0.9f, 0.95f};
        report("haze 1920x1080",
               time_ms(5, [&] { awda::kernels::haze_serial(img.data(), t.data(), a, out.data(), n); }),
               time_ms(5, [&] { awda::kernels::haze_parallel(img.data(), t.data(), a, out.data(), n); }));

        const float shift[3] = {0.0f, 0.0f, 0.03f};
        report("night 1920x1080",
               time_ms(5, [&] { awda::kernels::night_serial(img.data(), 2.2f, 0.35f, shift, out.data(), n); }),
               time_ms(5, [&] { awda::kernels::night_parallel(img.data(), 2.2f, 0.35f, shift, out.data(), n); }));

        std::vector<float> noise(n), blurred(n);
        awda::kernels::rain_noise_serial(42, 0.04f, noise.data(), n);
        std::vector<float> kern(11 * 11, 1.0f / 121.0f);
        report("conv 11x11",
               time_ms(2, [&] { awda::kernels::conv2d_serial(noise.data(), h, w, kern.data(), 11, blurred.data()); }),
               time_ms(2, [&] { awda::kernels::conv2d_parallel(noise.data(), h, w, kern.data(), 11, blurred.data()); }));

        report("rain noise",
               time_ms(5, [&] { awda::kernels::rain_noise_serial(42, 0.04f, noise.data(), n); }),
               time_ms(5, [&] { awda::kernels::rain_noise_parallel(42, 0.04f, noise.data(), n); }));
    }

    {
        const int m = 384, k = 384, n = 384;
        std::vector<double> a(m * k), b(k * n), c(m * n);
        for (auto& v : a) v = rng.uniform(-1, 1);
        for (auto& v : b) v = rng.uniform(-1, 1);
        report("matmul 384^3",
               time_ms(3, [&] { awda::kernels::mm_nn_serial(a.data(), b.data(), c.data(), m, k, n, false); }),
               time_ms(3, [&] { awda::kernels::mm_nn_parallel(a.data(), b.data(), c.data(), m, k, n, false); }));
    }
    return 0;
}
