#include "awda/image.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

#include <png.h>

#include "awda/util.hpp"

namespace awda {

ImageRGB::ImageRGB(int height_, int width_, float fill) : height(height_), width(width_) {
    require(height > 0 && width > 0, "ImageRGB: dimensions must be positive");
    data.assign(static_cast<std::size_t>(height) * width * 3, fill);
}

DepthMap::DepthMap(int height_, int width_, float fill) : height(height_), width(width_) {
    require(height > 0 && width > 0, "DepthMap: dimensions must be positive");
    data.assign(static_cast<std::size_t>(height) * width, fill);
}

void DepthMap::validate() const {
    for (float v : data)
        require(std::isfinite(v) && v >= 0.0f, "DepthMap: values must be finite and >= 0");
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

}  // namespace

ImageRGB read_png_rgb(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) fail("cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail("png_create_info_struct failed");
    }
    std::vector<png_bytep> rows;
    std::vector<unsigned char> buf;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail("png read error: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    int w = static_cast<int>(png_get_image_width(png, info));
    int h = static_cast<int>(png_get_image_height(png, info));
    std::size_t stride = png_get_rowbytes(png, info);
    buf.resize(stride * h);
    rows.resize(h);
    for (int y = 0; y < h; ++y) rows[y] = buf.data() + stride * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    ImageRGB img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = buf[stride * y + 3 * x + c] / 255.0f;
    return img;
}

void write_png_rgb(const std::string& path, const ImageRGB& img) {
    require(img.height > 0 && img.width > 0, "write_png_rgb: empty image");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) fail("cannot write " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail("png_create_info_struct failed");
    }
    std::vector<unsigned char> buf(static_cast<std::size_t>(img.height) * img.width * 3);
    std::vector<png_bytep> rows(img.height);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail("png write error: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                float v = img.at(y, x, c);
                v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
                buf[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        }
        rows[y] = buf.data() + static_cast<std::size_t>(y) * img.width * 3;
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

DepthMap read_depth_png16(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) fail("cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail("png_create_info_struct failed");
    }
    std::vector<png_bytep> rows;
    std::vector<unsigned char> buf;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail("png read error: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    if (png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY || png_get_bit_depth(png, info) != 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path + ": depth PNG must be 16-bit grayscale");
    }
    int w = static_cast<int>(png_get_image_width(png, info));
    int h = static_cast<int>(png_get_image_height(png, info));
    std::size_t stride = png_get_rowbytes(png, info);
    buf.resize(stride * h);
    rows.resize(h);
    for (int y = 0; y < h; ++y) rows[y] = buf.data() + stride * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    DepthMap depth(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            // PNG 16-bit samples are big-endian.
            unsigned hi = buf[stride * y + 2 * x];
            unsigned lo = buf[stride * y + 2 * x + 1];
            depth.data[static_cast<std::size_t>(y) * w + x] = ((hi << 8) | lo) / 65535.0f;
        }
    }
    return depth;
}

void write_depth_png16(const std::string& path, const DepthMap& depth) {
    require(depth.height > 0 && depth.width > 0, "write_depth_png16: empty depth");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) fail("cannot write " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail("png_create_info_struct failed");
    }
    std::vector<unsigned char> buf(static_cast<std::size_t>(depth.height) * depth.width * 2);
    std::vector<png_bytep> rows(depth.height);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail("png write error: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, depth.width, depth.height, 16, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    for (int y = 0; y < depth.height; ++y) {
        for (int x = 0; x < depth.width; ++x) {
            float v = depth.data[static_cast<std::size_t>(y) * depth.width + x];
            v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
            unsigned q = static_cast<unsigned>(std::lround(v * 65535.0f));
            buf[(static_cast<std::size_t>(y) * depth.width + x) * 2] = static_cast<unsigned char>(q >> 8);
            buf[(static_cast<std::size_t>(y) * depth.width + x) * 2 + 1] = static_cast<unsigned char>(q & 0xff);
        }
        rows[y] = buf.data() + static_cast<std::size_t>(y) * depth.width * 2;
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

DepthMap read_depth_raw(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) fail("cannot open " + path);
    char magic[16] = {};
    int h = 0, w = 0;
    if (std::fscanf(fp.get(), "%15s %d %d", magic, &h, &w) != 3 || std::strcmp(magic, "AWDEPTH") != 0)
        fail(path + ": bad raw depth header");
    if (std::fgetc(fp.get()) != '\n') fail(path + ": bad raw depth header terminator");
    if (h <= 0 || w <= 0) fail(path + ": bad raw depth dimensions");

    DepthMap depth(h, w);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(h) * w * 4);
    if (std::fread(bytes.data(), 1, bytes.size(), fp.get()) != bytes.size())
        fail(path + ": truncated raw depth payload");
    for (std::size_t i = 0; i < depth.data.size(); ++i) {
        std::uint32_t bits = static_cast<std::uint32_t>(bytes[4 * i]) |
                             (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                             (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                             (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
        float f;
        std::memcpy(&f, &bits, 4);
        depth.data[i] = f;
    }
    depth.validate();
    return depth;
}

void write_depth_raw(const std::string& path, const DepthMap& depth) {
    require(depth.height > 0 && depth.width > 0, "write_depth_raw: empty depth");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) fail("cannot write " + path);
    std::fprintf(fp.get(), "AWDEPTH %d %d\n", depth.height, depth.width);
    std::vector<unsigned char> bytes(depth.data.size() * 4);
    for (std::size_t i = 0; i < depth.data.size(); ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, &depth.data[i], 4);
        bytes[4 * i] = static_cast<unsigned char>(bits & 0xff);
        bytes[4 * i + 1] = static_cast<unsigned char>((bits >> 8) & 0xff);
        bytes[4 * i + 2] = static_cast<unsigned char>((bits >> 16) & 0xff);
        bytes[4 * i + 3] = static_cast<unsigned char>((bits >> 24) & 0xff);
    }
    if (std::fwrite(bytes.data(), 1, bytes.size(), fp.get()) != bytes.size())
        fail(path + ": short write");
}

DepthMap read_depth_any(const std::string& path) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".png") return read_depth_png16(path);
    return read_depth_raw(path);
}

}  // namespace awda
