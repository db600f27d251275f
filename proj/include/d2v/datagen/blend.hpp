#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "d2v/core/error.hpp"
#include "d2v/core/image.hpp"

namespace d2v::datagen {

/// The five rendering modes: black background, white background, grayscale,
/// color, original foreground.
enum class RenderMode { BB, WB, GS, Cr, Or };

inline const char* to_string(RenderMode m) {
    switch (m) {
        case RenderMode::BB: return "BB";
        case RenderMode::WB: return "WB";
        case RenderMode::GS: return "GS";
        case RenderMode::Cr: return "Cr";
        case RenderMode::Or: return "Or";
    }
    return "?";
}

inline RenderMode render_mode_from_string(const std::string& s) {
    if (s == "BB") return RenderMode::BB;
    if (s == "WB") return RenderMode::WB;
    if (s == "GS") return RenderMode::GS;
    if (s == "Cr") return RenderMode::Cr;
    if (s == "Or") return RenderMode::Or;
    throw PreconditionError("unknown render mode: " + s);
}

constexpr int kNumRenderModes = 5;

/// Whether the mode composites a background patch (all but Or).
inline bool mode_uses_background(RenderMode m) { return m != RenderMode::Or; }

/// Per-pixel absolute difference of two same-shaped images:
/// out[i,j,k] = |a[i,j,k] - b[i,j,k]|.
inline Image blend_abs_diff(const Image& fg, const Image& bg) {
    if (!fg.same_shape(bg))
        throw PreconditionError("blend_abs_diff: shape mismatch (" + std::to_string(fg.h) + "x" +
                                std::to_string(fg.w) + "x" + std::to_string(fg.c) + " vs " +
                                std::to_string(bg.h) + "x" + std::to_string(bg.w) + "x" +
                                std::to_string(bg.c) + ")");
    Image out(fg.h, fg.w, fg.c);
    for (size_t i = 0; i < fg.data.size(); ++i) {
        int d = int(fg.data[i]) - int(bg.data[i]);
        out.data[i] = uint8_t(d < 0 ? -d : d);
    }
    return out;
}

/// ITU-R BT.601 luma, rounded to nearest integer.
inline uint8_t luma601(uint8_t r, uint8_t g, uint8_t b) {
    return uint8_t(std::lround(0.299 * r + 0.587 * g + 0.114 * b));
}

/// Foreground mask: glyph intensity strictly above `threshold`.
inline bool glyph_mask(const Image& glyph, int y, int x, int threshold) {
    return int(glyph.at(y, x, 0)) > threshold;
}

/// Applies one of the five post-processing modes to a blended image.
///  - Cr: blended unchanged
///  - GS: BT.601 grayscale of blended, replicated to 3 channels
///  - BB: blended where the glyph mask is set, black elsewhere
///  - WB: blended where the glyph mask is set, white elsewhere
///  - Or: the original foreground (glyph replicated to 3 channels)
inline Image apply_mode(const Image& blended, const Image& glyph, RenderMode mode,
                        const Image& fg_original, int mask_threshold = 0) {
    require(blended.c == 3, "apply_mode expects a 3-channel blended image");
    require(glyph.c == 1 && glyph.h == blended.h && glyph.w == blended.w,
            "apply_mode: glyph must be single-channel and match the blended shape");
    switch (mode) {
        case RenderMode::Cr: return blended;
        case RenderMode::Or: {
            require(fg_original.same_shape(blended), "apply_mode: fg_original shape mismatch");
            return fg_original;
        }
        case RenderMode::GS: {
            Image out(blended.h, blended.w, 3);
            for (int y = 0; y < blended.h; ++y)
                for (int x = 0; x < blended.w; ++x) {
                    uint8_t g = luma601(blended.at(y, x, 0), blended.at(y, x, 1), blended.at(y, x, 2));
                    out.at(y, x, 0) = out.at(y, x, 1) = out.at(y, x, 2) = g;
                }
            return out;
        }
        case RenderMode::BB:
        case RenderMode::WB: {
            uint8_t off = mode == RenderMode::BB ? 0 : 255;
            Image out(blended.h, blended.w, 3);
            for (int y = 0; y < blended.h; ++y)
                for (int x = 0; x < blended.w; ++x) {
                    bool on = glyph_mask(glyph, y, x, mask_threshold);
                    for (int ch = 0; ch < 3; ++ch)
                        out.at(y, x, ch) = on ? blended.at(y, x, ch) : off;
                }
            return out;
        }
    }
    throw PreconditionError("apply_mode: unknown mode");
}

} // namespace d2v::datagen
