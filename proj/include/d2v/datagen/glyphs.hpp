#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "d2v/core/error.hpp"
#include "d2v/core/image.hpp"
#include "d2v/core/rng.hpp"
#include "d2v/core/serial.hpp"

namespace d2v::datagen {

/// Canonical glyph resolution. 28x28 sources are zero-padded to 32x32, which
/// is the input size the conv stack expects (two 2x poolings of 32 -> 8).
constexpr int kGlyphSize = 32;
constexpr int kRenderSize = 28;

struct Glyph {
    Image pixels;    // kGlyphSize x kGlyphSize x 1
    int class_label = 0;
};

/// Zero-pads a smaller single-channel image to the canonical 32x32 canvas,
/// centered. Larger inputs are rejected.
inline Image canonicalize_glyph(const Image& src) {
    require(src.c == 1, "glyph must be single-channel");
    require(src.h <= kGlyphSize && src.w <= kGlyphSize, "glyph larger than canonical canvas");
    if (src.h == kGlyphSize && src.w == kGlyphSize) return src;
    Image out(kGlyphSize, kGlyphSize, 1, 0);
    int oy = (kGlyphSize - src.h) / 2;
    int ox = (kGlyphSize - src.w) / 2;
    for (int y = 0; y < src.h; ++y)
        for (int x = 0; x < src.w; ++x) out.at(y + oy, x + ox, 0) = src.at(y, x, 0);
    return out;
}

/// A labeled-glyph provider. sample() must be deterministic in the Rng stream.
class GlyphSource {
public:
    virtual ~GlyphSource() = default;
    virtual Glyph sample(int class_label, Rng& rng) = 0;
    virtual int num_classes() const = 0;
    virtual const std::string& name() const = 0;
};

namespace detail {

using Polyline = std::vector<std::pair<double, double>>;

/// Stroke skeletons for the ten digit classes, in a unit box (y grows down).
inline const std::vector<std::vector<Polyline>>& digit_strokes() {
    auto ring = [](double cx, double cy, double rx, double ry, int n = 14) {
        Polyline p;
        for (int i = 0; i <= n; ++i) {
            double a = 6.283185307179586 * i / n;
            p.push_back({cx + rx * std::sin(a), cy - ry * std::cos(a)});
        }
        return p;
    };
    static const std::vector<std::vector<Polyline>> strokes = {
        // 0
        {ring(0.50, 0.50, 0.26, 0.38)},
        // 1
        {{{0.36, 0.26}, {0.56, 0.08}, {0.56, 0.92}}},
        // 2
        {{{0.24, 0.28},
          {0.30, 0.14},
          {0.48, 0.08},
          {0.66, 0.12},
          {0.75, 0.26},
          {0.70, 0.42},
          {0.52, 0.58},
          {0.32, 0.72},
          {0.22, 0.88},
          {0.78, 0.88}}},
        // 3
        {{{0.26, 0.16},
          {0.46, 0.08},
          {0.66, 0.13},
          {0.72, 0.27},
          {0.64, 0.40},
          {0.47, 0.46},
          {0.66, 0.52},
          {0.74, 0.67},
          {0.66, 0.84},
          {0.45, 0.92},
          {0.24, 0.84}}},
        // 4
        {{{0.64, 0.08}, {0.22, 0.60}, {0.80, 0.60}}, {{0.64, 0.26}, {0.64, 0.92}}},
        // 5
        {{{0.72, 0.10},
          {0.30, 0.10},
          {0.27, 0.46},
          {0.50, 0.40},
          {0.69, 0.48},
          {0.75, 0.64},
          {0.67, 0.83},
          {0.45, 0.92},
          {0.24, 0.82}}},
        // 6
        {{{0.66, 0.10},
          {0.44, 0.20},
          {0.31, 0.43},
          {0.27, 0.64},
          {0.34, 0.83},
          {0.52, 0.92},
          {0.68, 0.84},
          {0.73, 0.68},
          {0.64, 0.54},
          {0.46, 0.52},
          {0.33, 0.61}}},
        // 7
        {{{0.22, 0.10}, {0.78, 0.10}, {0.46, 0.92}}},
        // 8
        {ring(0.50, 0.29, 0.20, 0.19), ring(0.50, 0.69, 0.24, 0.21)},
        // 9
        {ring(0.50, 0.32, 0.21, 0.22), {{0.71, 0.36}, {0.70, 0.62}, {0.58, 0.92}}},
    };
    return strokes;
}

inline double dist_point_segment(double px, double py, double ax, double ay, double bx, double by) {
    double dx = bx - ax, dy = by - ay;
    double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    double qx = ax + t * dx, qy = ay + t * dy;
    return std::hypot(px - qx, py - qy);
}

} // namespace detail

/// Style parameters of a procedural glyph family. Distinct families stand in
/// for distinct handwriting datasets at desk scale.
struct GlyphStyle {
    std::string name;
    double thickness = 2.0;    // stroke width in pixels
    double slant = 0.0;        // horizontal shear, px of offset per half box height
    double gamma = 1.0;        // ink response curve (<1 soft/fat, >1 crisp/thin)
    double x_scale = 1.0;
    double y_scale = 1.0;
    double rot_jitter = 0.07;  // radians
    double pos_jitter = 1.5;   // pixels
    double scale_jitter = 0.10;
    double thick_jitter = 0.10;
};

/// Renders digit-like glyphs from stroke skeletons with a per-family style
/// and seeded per-example jitter.
class ProceduralGlyphs : public GlyphSource {
public:
    explicit ProceduralGlyphs(GlyphStyle style, int num_classes = 10)
        : style_(std::move(style)), num_classes_(num_classes) {
        require(num_classes_ >= 2 && num_classes_ <= 10, "procedural families provide 2..10 classes");
    }

    Glyph sample(int class_label, Rng& rng) override {
        require(class_label >= 0 && class_label < num_classes_, "class label out of range");
        double rot = rng.uniform(-style_.rot_jitter, style_.rot_jitter);
        double scale = 1.0 + rng.uniform(-style_.scale_jitter, style_.scale_jitter);
        double dx = rng.uniform(-style_.pos_jitter, style_.pos_jitter);
        double dy = rng.uniform(-style_.pos_jitter, style_.pos_jitter);
        double thick = style_.thickness * (1.0 + rng.uniform(-style_.thick_jitter, style_.thick_jitter));
        return Glyph{canonicalize_glyph(raster(class_label, rot, scale, dx, dy, thick)), class_label};
    }

    int num_classes() const override { return num_classes_; }
    const std::string& name() const override { return style_.name; }

private:
    Image raster(int cls, double rot, double scale, double dx, double dy, double thick) const {
        const double box = 20.0;
        const double cx = kRenderSize / 2.0, cy = kRenderSize / 2.0;
        const double cr = std::cos(rot), sr = std::sin(rot);

        std::vector<detail::Polyline> segs;
        for (const auto& line : detail::digit_strokes()[cls]) {
            detail::Polyline t;
            for (auto [ux, uy] : line) {
                // unit box -> centered, styled, jittered pixel coordinates
                double px = (ux - 0.5) * box * style_.x_scale * scale;
                double py = (uy - 0.5) * box * style_.y_scale * scale;
                px -= style_.slant * py;  // italic shear about the glyph center
                double rx = cr * px - sr * py;
                double ry = sr * px + cr * py;
                t.push_back({cx + rx + dx, cy + ry + dy});
            }
            segs.push_back(std::move(t));
        }

        const double aa = 0.7;
        Image out(kRenderSize, kRenderSize, 1, 0);
        for (int y = 0; y < kRenderSize; ++y)
            for (int x = 0; x < kRenderSize; ++x) {
                double d = 1e9;
                for (const auto& line : segs)
                    for (size_t i = 0; i + 1 < line.size(); ++i)
                        d = std::min(d, detail::dist_point_segment(x + 0.5, y + 0.5,
                                                                   line[i].first, line[i].second,
                                                                   line[i + 1].first, line[i + 1].second));
                double cov = std::clamp((thick / 2.0 + aa - d) / (2.0 * aa), 0.0, 1.0);
                out.at(y, x, 0) = uint8_t(std::lround(255.0 * std::pow(cov, style_.gamma)));
            }
        return out;
    }

    GlyphStyle style_;
    int num_classes_;
};

/// The named style presets. Six families so the full F=6 grid reproduces the
/// 54-domain layout; the first three are the desk-scale defaults.
inline GlyphStyle glyph_style_preset(const std::string& name) {
    if (name == "strokes-a") return {.name = "strokes-a", .thickness = 2.0};
    if (name == "strokes-b") return {.name = "strokes-b", .thickness = 3.2, .gamma = 0.8};
    if (name == "strokes-c") return {.name = "strokes-c", .thickness = 1.5, .slant = 0.45, .gamma = 1.2};
    if (name == "strokes-d") return {.name = "strokes-d", .thickness = 1.2, .gamma = 1.4};
    if (name == "strokes-e") return {.name = "strokes-e", .thickness = 2.4, .x_scale = 1.22, .y_scale = 0.88};
    if (name == "strokes-f") return {.name = "strokes-f", .thickness = 2.6, .slant = -0.38, .gamma = 0.9};
    throw PreconditionError("unknown glyph family preset: " + name);
}

/// Fixed pool of labeled glyph images (used by the IDX adapter and tests).
class FixedGlyphs : public GlyphSource {
public:
    FixedGlyphs(std::string name, std::vector<Glyph> pool, int num_classes)
        : name_(std::move(name)), num_classes_(num_classes), by_class_(num_classes) {
        require(!pool.empty(), "glyph pool must be non-empty");
        glyphs_ = std::move(pool);
        for (size_t i = 0; i < glyphs_.size(); ++i) {
            require(glyphs_[i].class_label >= 0 && glyphs_[i].class_label < num_classes,
                    "glyph label out of range");
            by_class_[glyphs_[i].class_label].push_back(i);
        }
        for (int c = 0; c < num_classes; ++c)
            require(!by_class_[c].empty(), "glyph pool missing class " + std::to_string(c));
    }

    Glyph sample(int class_label, Rng& rng) override {
        require(class_label >= 0 && class_label < num_classes_, "class label out of range");
        const auto& bucket = by_class_[class_label];
        return glyphs_[bucket[rng.below(bucket.size())]];
    }

    int num_classes() const override { return num_classes_; }
    const std::string& name() const override { return name_; }

private:
    std::string name_;
    int num_classes_;
    std::vector<Glyph> glyphs_;
    std::vector<std::vector<size_t>> by_class_;
};

/// Reads big-endian IDX image/label files (the MNIST container format) so
/// real handwriting corpora can be dropped in when available.
inline std::unique_ptr<FixedGlyphs> load_idx_glyphs(const std::string& name,
                                                    const std::string& images_path,
                                                    const std::string& labels_path,
                                                    int num_classes = 10) {
    auto read_be32 = [](BinReader& r) {
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = (v << 8) | r.pod<uint8_t>();
        return v;
    };

    BinReader imgs(images_path);
    if (read_be32(imgs) != 0x00000803u) throw IoError("not an IDX3 image file", images_path);
    uint32_t n = read_be32(imgs);
    uint32_t h = read_be32(imgs);
    uint32_t w = read_be32(imgs);
    require(h <= kGlyphSize && w <= kGlyphSize, "IDX glyphs larger than 32x32");

    BinReader labs(labels_path);
    if (read_be32(labs) != 0x00000801u) throw IoError("not an IDX1 label file", labels_path);
    uint32_t nl = read_be32(labs);
    require(n == nl, "IDX image/label counts differ");

    std::vector<Glyph> pool;
    pool.reserve(n);
    for (uint32_t i = 0; i < n; ++i) {
        Image raw(int(h), int(w), 1);
        imgs.bytes(raw.data.data(), raw.data.size());
        int label = labs.pod<uint8_t>();
        if (label >= num_classes) continue;  // e.g. restricting EMNIST subsets
        pool.push_back(Glyph{canonicalize_glyph(raw), label});
    }
    return std::make_unique<FixedGlyphs>(name, std::move(pool), num_classes);
}

} // namespace d2v::datagen
