#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "sfsnid/tensor.hpp"

namespace sfsnid {

// 8-bit RGB image I/O. PNG is the output format; PNG and binary PPM (P6,
// maxval 255) are accepted on input. Pixel values map to [0,1] as byte/255.

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline Tensor bytes_to_tensor(const std::vector<unsigned char>& rgb, int H, int W) {
    std::vector<real> v(static_cast<std::size_t>(3) * H * W);
    const real inv = 1.0 / 255.0;
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
            for (int c = 0; c < 3; ++c)
                v[(static_cast<std::size_t>(c) * H + h) * W + w] =
                    rgb[(static_cast<std::size_t>(h) * W + w) * 3 + c] * inv;
    return Tensor::from({3, H, W}, std::move(v));
}

// round-to-nearest quantization of [0,1] values (clamped) to bytes
inline std::vector<unsigned char> tensor_to_bytes(const Tensor& img) {
    require(img.shape().size() == 3 && img.dim(0) == 3,
            "save_image: expected [3,H,W], got " + shape_str(img.shape()));
    const int H = img.dim(1), W = img.dim(2);
    std::vector<unsigned char> rgb(static_cast<std::size_t>(3) * H * W);
    const real* p = img.data();
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
            for (int c = 0; c < 3; ++c) {
                real v = p[(static_cast<std::size_t>(c) * H + h) * W + w];
                v = std::clamp(v, real(0), real(1));
                rgb[(static_cast<std::size_t>(h) * W + w) * 3 + c] =
                    static_cast<unsigned char>(v * 255.0 + 0.5);
            }
    return rgb;
}

inline Tensor load_png(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    require(f != nullptr, "load_image: cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png != nullptr, "load_image: libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail("load_image: libpng info init failed");
    }
    std::vector<unsigned char> rgb;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail("load_image: PNG decode error in " + path);
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    const png_uint_32 W = png_get_image_width(png, info);
    const png_uint_32 H = png_get_image_height(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);
    // normalize any lossless variant to 8-bit RGB
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    require(png_get_rowbytes(png, info) == static_cast<std::size_t>(W) * 3,
            "load_image: unexpected row layout in " + path);
    rgb.resize(static_cast<std::size_t>(H) * W * 3);
    rows.resize(H);
    for (png_uint_32 h = 0; h < H; ++h) rows[h] = rgb.data() + static_cast<std::size_t>(h) * W * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return bytes_to_tensor(rgb, static_cast<int>(H), static_cast<int>(W));
}

inline void save_png(const Tensor& img, const std::string& path) {
    const std::vector<unsigned char> rgb = tensor_to_bytes(img);
    const int H = img.dim(1), W = img.dim(2);
    FilePtr f(std::fopen(path.c_str(), "wb"));
    require(f != nullptr, "save_image: cannot open " + path + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png != nullptr, "save_image: libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail("save_image: libpng info init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail("save_image: PNG encode error for " + path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(H);
    for (int h = 0; h < H; ++h)
        rows[h] = const_cast<png_bytep>(rgb.data() + static_cast<std::size_t>(h) * W * 3);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline int ppm_read_token(std::FILE* f) {
    // skips whitespace and '#' comments, then parses a nonnegative integer
    int c = std::fgetc(f);
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#')
            while (c != EOF && c != '\n') c = std::fgetc(f);
        c = std::fgetc(f);
    }
    require(c != EOF && std::isdigit(c), "load_image: malformed PPM header");
    int value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        c = std::fgetc(f);
    }
    return value;
}

inline Tensor load_ppm(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    require(f != nullptr, "load_image: cannot open " + path);
    char magic[2] = {0, 0};
    require(std::fread(magic, 1, 2, f.get()) == 2 && magic[0] == 'P' && magic[1] == '6',
            "load_image: not a binary PPM (P6): " + path);
    const int W = ppm_read_token(f.get());
    const int H = ppm_read_token(f.get());
    const int maxval = ppm_read_token(f.get());
    require(W > 0 && H > 0, "load_image: bad PPM dimensions in " + path);
    require(maxval == 255, "load_image: PPM maxval must be 255, got " + std::to_string(maxval));
    std::vector<unsigned char> rgb(static_cast<std::size_t>(H) * W * 3);
    require(std::fread(rgb.data(), 1, rgb.size(), f.get()) == rgb.size(),
            "load_image: truncated PPM pixel data in " + path);
    return bytes_to_tensor(rgb, H, W);
}

inline void save_ppm(const Tensor& img, const std::string& path) {
    const std::vector<unsigned char> rgb = tensor_to_bytes(img);
    const int H = img.dim(1), W = img.dim(2);
    FilePtr f(std::fopen(path.c_str(), "wb"));
    require(f != nullptr, "save_image: cannot open " + path + " for writing");
    std::fprintf(f.get(), "P6\n%d %d\n255\n", W, H);
    require(std::fwrite(rgb.data(), 1, rgb.size(), f.get()) == rgb.size(),
            "save_image: short write to " + path);
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           std::equal(suffix.rbegin(), suffix.rend(), s.rbegin(),
                      [](char a, char b) { return std::tolower(a) == std::tolower(b); });
}

} // namespace detail

// load an 8-bit RGB image as Tensor[3,H,W] with values byte/255 exactly
inline Tensor load_image(const std::string& path) {
    if (detail::ends_with(path, ".ppm")) return detail::load_ppm(path);
    if (detail::ends_with(path, ".png")) return detail::load_png(path);
    fail("load_image: unsupported extension (expected .png or .ppm): " + path);
}

// save Tensor[3,H,W] (values clamped to [0,1], round-to-nearest quantization)
inline void save_image(const Tensor& img, const std::string& path) {
    if (detail::ends_with(path, ".ppm")) return detail::save_ppm(img, path);
    if (detail::ends_with(path, ".png")) return detail::save_png(img, path);
    fail("save_image: unsupported extension (expected .png or .ppm): " + path);
}

} // namespace sfsnid
