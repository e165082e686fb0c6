#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "awda/core.hpp"
#include "awda/image.hpp"
#include "awda/util.hpp"

namespace awda::weather {

struct HazeParams {
    double beta = 1.0;                        // attenuation, > 0
    std::array<double, 3> light = {1, 1, 1};  // atmospheric light per channel, in [0,1]
    void validate() const;
};

struct RainParams {
    double rho = 0.04;      // streak density, in (0,1)
    double length = 11;     // streak length in pixels, >= 1
    double theta_deg = 0;   // streak angle
    int k = 9;              // blur kernel size, odd and >= 3
    double alpha = 0.25;    // blend ratio, in [0,1]
    void validate() const;
};

struct NightParams {
    double gamma = 2.2;  // > 1
    double gain = 0.35;  // in (0,1]
    std::array<double, 3> blue_shift = {0, 0, 0.03};
    void validate() const;
};

using ParamsVariant = std::variant<HazeParams, RainParams, NightParams>;

// t(x,y) = exp(-beta * d_hat(x,y)) with depth min-max normalized to [0,1]
// over the image. Constant-depth maps normalize to d_hat == 0, i.e. t == 1.
std::vector<float> transmission_from_depth(const DepthMap& depth, double beta);

// H_c = J_c * t + A_c * (1 - t), clamped to [0,1].
ImageRGB apply_haze(const ImageRGB& img, const std::vector<float>& transmission,
                    const std::array<double, 3>& light);

// Noise seeding, directional motion blur, alpha blending, in that order.
// Deterministic for a fixed rng state.
ImageRGB synth_rain(const ImageRGB& img, const RainParams& params, RngStream& rng);

// v' = clamp(gain * v^gamma + blue_shift_c), monotone in v before clamping.
ImageRGB apply_night(const ImageRGB& img, const NightParams& params);

// Normalized k x k line kernel at the given angle with effective length
// min(length, k). Exposed for tests.
std::vector<float> line_kernel(int k, double length, double theta_deg);

// Uniform draws within the documented ranges; the Source domain is rejected.
ParamsVariant sample_weather_params(Domain domain, RngStream& rng);

// Reproducibility sidecar: sampled parameters plus the seed that produced
// them.
std::string params_to_json(const ParamsVariant& params, std::uint64_t seed,
                           const std::string& source);

}  // namespace awda::weather
