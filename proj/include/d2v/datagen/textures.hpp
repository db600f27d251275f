#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "d2v/core/error.hpp"
#include "d2v/core/image.hpp"
#include "d2v/core/rng.hpp"

namespace d2v::datagen {

constexpr int kPatchSize = 32;

struct BackgroundPatch {
    Image pixels;  // 32x32x3
    std::string source_id;
};

/// Source of 32x32x3 background crops. sample() must be deterministic in the
/// Rng stream.
class PatchSource {
public:
    virtual ~PatchSource() = default;
    virtual BackgroundPatch sample(Rng& rng) = 0;
    virtual const std::string& name() const = 0;
};

/// Smoothly varying colored noise: a coarse random RGB lattice upsampled
/// bilinearly, with mild per-pixel grain. Stands in for natural-image crops.
class SmoothNoiseTexture : public PatchSource {
public:
    explicit SmoothNoiseTexture(std::string name = "synthetic-texture-A") : name_(std::move(name)) {}

    BackgroundPatch sample(Rng& rng) override {
        constexpr int G = 5;  // lattice resolution
        double lattice[G][G][3];
        for (int y = 0; y < G; ++y)
            for (int x = 0; x < G; ++x)
                for (int ch = 0; ch < 3; ++ch) lattice[y][x][ch] = rng.uniform(0.0, 255.0);

        Image img(kPatchSize, kPatchSize, 3);
        for (int y = 0; y < kPatchSize; ++y)
            for (int x = 0; x < kPatchSize; ++x) {
                double gy = double(y) / (kPatchSize - 1) * (G - 1);
                double gx = double(x) / (kPatchSize - 1) * (G - 1);
                int y0 = std::min(int(gy), G - 2), x0 = std::min(int(gx), G - 2);
                double fy = gy - y0, fx = gx - x0;
                for (int ch = 0; ch < 3; ++ch) {
                    double v = lattice[y0][x0][ch] * (1 - fy) * (1 - fx) +
                               lattice[y0][x0 + 1][ch] * (1 - fy) * fx +
                               lattice[y0 + 1][x0][ch] * fy * (1 - fx) +
                               lattice[y0 + 1][x0 + 1][ch] * fy * fx;
                    img.at(y, x, ch) = uint8_t(std::clamp(std::lround(v), 0l, 255l));
                }
            }
        // grain
        for (auto& b : img.data) {
            long v = long(b) + std::lround(rng.uniform(-10.0, 10.0));
            b = uint8_t(std::clamp(v, 0l, 255l));
        }
        return {std::move(img), name_};
    }

    const std::string& name() const override { return name_; }

private:
    std::string name_;
};

/// Flat base color overlaid with random rectangles and stripes. Stands in
/// for object-centric crops with hard edges.
class GeometricTexture : public PatchSource {
public:
    explicit GeometricTexture(std::string name = "synthetic-texture-B") : name_(std::move(name)) {}

    BackgroundPatch sample(Rng& rng) override {
        Image img(kPatchSize, kPatchSize, 3);
        uint8_t base[3];
        for (int ch = 0; ch < 3; ++ch) base[ch] = uint8_t(rng.below(256));
        for (int y = 0; y < kPatchSize; ++y)
            for (int x = 0; x < kPatchSize; ++x)
                for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = base[ch];

        int shapes = 3 + rng.randint(4);
        for (int s = 0; s < shapes; ++s) {
            uint8_t col[3];
            for (int ch = 0; ch < 3; ++ch) col[ch] = uint8_t(rng.below(256));
            if (rng.uniform() < 0.3) {
                // stripe
                bool horiz = rng.uniform() < 0.5;
                int pos = rng.randint(kPatchSize);
                int width = 2 + rng.randint(6);
                for (int y = 0; y < kPatchSize; ++y)
                    for (int x = 0; x < kPatchSize; ++x) {
                        int k = horiz ? y : x;
                        if (k >= pos && k < pos + width)
                            for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = col[ch];
                    }
            } else {
                int x0 = rng.randint(kPatchSize), y0 = rng.randint(kPatchSize);
                int w = 4 + rng.randint(16), h = 4 + rng.randint(16);
                for (int y = y0; y < std::min(y0 + h, kPatchSize); ++y)
                    for (int x = x0; x < std::min(x0 + w, kPatchSize); ++x)
                        for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = col[ch];
            }
        }
        return {std::move(img), name_};
    }

    const std::string& name() const override { return name_; }

private:
    std::string name_;
};

/// Crops 32x32 patches from a pool of larger images (for real background
/// datasets). Crop size is fixed at 32x32.
class CroppedImageTexture : public PatchSource {
public:
    CroppedImageTexture(std::string name, std::vector<Image> pool) : name_(std::move(name)), pool_(std::move(pool)) {
        require(!pool_.empty(), "background image pool must be non-empty");
        for (const auto& im : pool_)
            require(im.c == 3 && im.h >= kPatchSize && im.w >= kPatchSize,
                    "background images must be RGB and at least 32x32");
    }

    BackgroundPatch sample(Rng& rng) override {
        const Image& src = pool_[rng.below(pool_.size())];
        int y0 = src.h == kPatchSize ? 0 : rng.randint(src.h - kPatchSize + 1);
        int x0 = src.w == kPatchSize ? 0 : rng.randint(src.w - kPatchSize + 1);
        Image out(kPatchSize, kPatchSize, 3);
        for (int y = 0; y < kPatchSize; ++y)
            for (int x = 0; x < kPatchSize; ++x)
                for (int ch = 0; ch < 3; ++ch) out.at(y, x, ch) = src.at(y0 + y, x0 + x, ch);
        return {std::move(out), name_};
    }

    const std::string& name() const override { return name_; }

private:
    std::string name_;
    std::vector<Image> pool_;
};

inline std::unique_ptr<PatchSource> make_patch_source(const std::string& name) {
    if (name == "synthetic-texture-A") return std::make_unique<SmoothNoiseTexture>(name);
    if (name == "synthetic-texture-B") return std::make_unique<GeometricTexture>(name);
    throw PreconditionError("unknown background source: " + name);
}

} // namespace d2v::datagen
