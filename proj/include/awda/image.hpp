#pragma once

#include <string>
#include <vector>

namespace awda {

// RGB image, channels in [0, 1], row-major HWC.
struct ImageRGB {
    int height = 0, width = 0;
    std::vector<float> data;

    ImageRGB() = default;
    ImageRGB(int height, int width, float fill = 0.0f);

    int pixels() const { return height * width; }
    float& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    float at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

// Per-pixel nonnegative depth, arbitrary metric scale; paired with an image
// of the same dimensions.
struct DepthMap {
    int height = 0, width = 0;
    std::vector<float> data;

    DepthMap() = default;
    DepthMap(int height, int width, float fill = 0.0f);

    int pixels() const { return height * width; }
    void validate() const;
};

// 8-bit PNG, linearized to [0,1] on load (v / 255).
ImageRGB read_png_rgb(const std::string& path);
void write_png_rgb(const std::string& path, const ImageRGB& img);

// 16-bit grayscale PNG depth, loaded as v / 65535.
DepthMap read_depth_png16(const std::string& path);
void write_depth_png16(const std::string& path, const DepthMap& depth);

// Raw plane: one text header line "AWDEPTH <height> <width>\n" followed by
// height*width little-endian 32-bit floats, row-major.
DepthMap read_depth_raw(const std::string& path);
void write_depth_raw(const std::string& path, const DepthMap& depth);

// Dispatch by extension: .png -> 16-bit grayscale PNG, .depth -> raw plane.
DepthMap read_depth_any(const std::string& path);

}  // namespace awda
