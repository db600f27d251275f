#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <png.h>

#include "d2v/core/error.hpp"

namespace d2v {

/// Dense uint8 image, row-major (y, x, channel). Values live in [0, 255].
struct Image {
    int h = 0;
    int w = 0;
    int c = 0;
    std::vector<uint8_t> data;

    Image() = default;
    Image(int h, int w, int c, uint8_t fill = 0) : h(h), w(w), c(c), data(size_t(h) * w * c, fill) {}

    uint8_t& at(int y, int x, int ch) { return data[(size_t(y) * w + x) * c + ch]; }
    uint8_t at(int y, int x, int ch) const { return data[(size_t(y) * w + x) * c + ch]; }

    size_t size() const { return data.size(); }
    bool same_shape(const Image& o) const { return h == o.h && w == o.w && c == o.c; }

    bool operator==(const Image& o) const {
        return h == o.h && w == o.w && c == o.c && data == o.data;
    }
};

/// Replicates a single-channel image across `channels` channels.
inline Image replicate_channels(const Image& gray, int channels = 3) {
    require(gray.c == 1, "replicate_channels expects a single-channel image");
    Image out(gray.h, gray.w, channels);
    for (int y = 0; y < gray.h; ++y)
        for (int x = 0; x < gray.w; ++x)
            for (int ch = 0; ch < channels; ++ch) out.at(y, x, ch) = gray.at(y, x, 0);
    return out;
}

/// Writes an 8-bit grayscale or RGB PNG. Emits no timestamp chunk, so output
/// bytes depend only on pixel content.
inline void write_png(const Image& img, const std::string& path) {
    require(img.c == 1 || img.c == 3, "write_png supports 1- or 3-channel images");
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IoError("cannot open for writing", path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("libpng init failed", path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("libpng write failed", path);
    }

    png_init_io(png, fp);
    png_set_IHDR(png, info, png_uint_32(img.w), png_uint_32(img.h), 8,
                 img.c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(img.h);
    for (int y = 0; y < img.h; ++y)
        rows[y] = const_cast<png_bytep>(img.data.data() + size_t(y) * img.w * img.c);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

} // namespace d2v
