#include "awda/weather.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "awda/kernels.hpp"

namespace awda::weather {

void HazeParams::validate() const {
    require(std::isfinite(beta) && beta > 0, "HazeParams: beta must be > 0");
    for (double a : light)
        require(std::isfinite(a) && a >= 0 && a <= 1, "HazeParams: light must be in [0,1]");
}

void RainParams::validate() const {
    require(rho > 0 && rho < 1, "RainParams: rho must be in (0,1)");
    require(length >= 1, "RainParams: length must be >= 1");
    require(std::isfinite(theta_deg), "RainParams: theta must be finite");
    require(k >= 3 && k % 2 == 1, "RainParams: k must be odd and >= 3");
    require(alpha >= 0 && alpha <= 1, "RainParams: alpha must be in [0,1]");
}

void NightParams::validate() const {
    require(gamma > 1, "NightParams: gamma must be > 1");
    require(gain > 0 && gain <= 1, "NightParams: gain must be in (0,1]");
    for (double s : blue_shift)
        require(std::isfinite(s), "NightParams: blue_shift must be finite");
}

std::vector<float> transmission_from_depth(const DepthMap& depth, double beta) {
    require(beta > 0, "transmission_from_depth: beta must be > 0");
    depth.validate();
    int n = depth.pixels();
    float dmin = depth.data[0], dmax = depth.data[0];
#pragma omp parallel for reduction(min : dmin) reduction(max : dmax) schedule(static)
    for (int i = 0; i < n; ++i) {
        dmin = std::min(dmin, depth.data[i]);
        dmax = std::max(dmax, depth.data[i]);
    }
    std::vector<float> dnorm(n, 0.0f);
    float range = dmax - dmin;
    if (range > 0.0f) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i) dnorm[i] = (depth.data[i] - dmin) / range;
    }
    std::vector<float> t(n);
    kernels::exp_transmission(dnorm.data(), static_cast<float>(beta), t.data(), n);
    return t;
}

ImageRGB apply_haze(const ImageRGB& img, const std::vector<float>& transmission,
                    const std::array<double, 3>& light) {
    require(static_cast<int>(transmission.size()) == img.pixels(),
            "apply_haze: transmission dimensions do not match image");
    for (double a : light)
        require(a >= 0 && a <= 1, "apply_haze: light must be in [0,1]");
    float a3[3] = {static_cast<float>(light[0]), static_cast<float>(light[1]),
                   static_cast<float>(light[2])};
    ImageRGB out(img.height, img.width);
    kernels::haze(img.data.data(), transmission.data(), a3, out.data.data(), img.pixels());
    return out;
}

std::vector<float> line_kernel(int k, double length, double theta_deg) {
    require(k >= 3 && k % 2 == 1, "line_kernel: k must be odd and >= 3");
    require(length >= 1, "line_kernel: length must be >= 1");
    // Lengths beyond the kernel clip to it.
    double len = std::min(length, static_cast<double>(k));
    double theta = theta_deg * 3.1415926535897932384626433832795 / 180.0;
    double cx = std::cos(theta), sy = std::sin(theta);
    int r = k / 2;
    std::vector<float> kern(static_cast<std::size_t>(k) * k, 0.0f);
    int steps = std::max(1, static_cast<int>(std::lround(len)));
    for (int i = 0; i < steps; ++i) {
        double s = i - (steps - 1) / 2.0;
        int px = static_cast<int>(std::lround(r + s * cx));
        int py = static_cast<int>(std::lround(r + s * sy));
        px = std::clamp(px, 0, k - 1);
        py = std::clamp(py, 0, k - 1);
        kern[static_cast<std::size_t>(py) * k + px] += 1.0f;
    }
    float total = 0.0f;
    for (float v : kern) total += v;
    for (float& v : kern) v /= total;
    return kern;
}

ImageRGB synth_rain(const ImageRGB& img, const RainParams& params, RngStream& rng) {
    params.validate();
    int n = img.pixels();
    std::uint64_t noise_seed = rng.next_u64();

    std::vector<float> noise(n);
    kernels::rain_noise(noise_seed, static_cast<float>(params.rho), noise.data(), n);

    std::vector<float> kern = line_kernel(params.k, params.length, params.theta_deg);
    std::vector<float> streaks(n);
    kernels::conv2d(noise.data(), img.height, img.width, kern.data(), params.k, streaks.data());

    ImageRGB out(img.height, img.width);
    kernels::blend(img.data.data(), streaks.data(), static_cast<float>(params.alpha),
                   out.data.data(), n);
    return out;
}

ImageRGB apply_night(const ImageRGB& img, const NightParams& params) {
    params.validate();
    float shift[3] = {static_cast<float>(params.blue_shift[0]),
                      static_cast<float>(params.blue_shift[1]),
                      static_cast<float>(params.blue_shift[2])};
    ImageRGB out(img.height, img.width);
    kernels::night(img.data.data(), static_cast<float>(params.gamma),
                   static_cast<float>(params.gain), shift, out.data.data(), img.pixels());
    return out;
}

ParamsVariant sample_weather_params(Domain domain, RngStream& rng) {
    require(is_target(domain), "sample_weather_params: Source domain has no weather parameters");
    switch (domain) {
        case Domain::TargetHaze: {
            HazeParams p;
            p.beta = rng.uniform(0.6, 1.4);
            double a = rng.uniform(0.7, 1.0);
            p.light = {a, a, a};
            return p;
        }
        case Domain::TargetRain: {
            RainParams p;
            p.rho = rng.uniform(0.02, 0.06);
            p.length = rng.uniform(7.0, 15.0);
            p.theta_deg = rng.uniform(-15.0, 15.0);
            p.k = 7 + 2 * rng.uniform_int(0, 2);  // {7, 9, 11}
            p.alpha = rng.uniform(0.15, 0.35);
            return p;
        }
        case Domain::TargetNight: {
            NightParams p;
            p.gamma = rng.uniform(1.8, 2.6);
            p.gain = rng.uniform(0.25, 0.45);
            p.blue_shift = {0.0, 0.0, 0.03};
            return p;
        }
        default:
            throw std::invalid_argument("sample_weather_params: bad domain");
    }
}

std::string params_to_json(const ParamsVariant& params, std::uint64_t seed,
                           const std::string& source) {
    nlohmann::json j;
    j["seed"] = seed;
    j["source"] = source;
    if (const auto* h = std::get_if<HazeParams>(&params)) {
        j["domain"] = "haze";
        j["params"] = {{"beta", h->beta}, {"A", h->light}};
    } else if (const auto* r = std::get_if<RainParams>(&params)) {
        j["domain"] = "rain";
        j["params"] = {{"rho", r->rho},
                       {"L", r->length},
                       {"theta_deg", r->theta_deg},
                       {"k", r->k},
                       {"alpha", r->alpha}};
    } else if (const auto* ni = std::get_if<NightParams>(&params)) {
        j["domain"] = "night";
        j["params"] = {{"gamma", ni->gamma}, {"gain", ni->gain}, {"blue_shift", ni->blue_shift}};
    }
    return j.dump(2);
}

}  // namespace awda::weather
