#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "d2v/core/error.hpp"
#include "d2v/core/image.hpp"
#include "d2v/core/rng.hpp"
#include "d2v/core/serial.hpp"
#include "d2v/datagen/blend.hpp"
#include "d2v/datagen/glyphs.hpp"
#include "d2v/datagen/manifest.hpp"
#include "d2v/datagen/textures.hpp"

namespace d2v::datagen {

struct LabeledImage {
    Image image;  // 32x32x3
    int class_label = 0;
};

// ---------------------------------------------------------------------------
// Shard container: packed uint8 tensors for one domain.

constexpr uint32_t kShardVersion = 1;
inline constexpr char kShardMagic[8] = {'D', '2', 'V', 'S', 'H', 'A', 'R', 'D'};

inline void write_shard(const std::string& path, const std::vector<LabeledImage>& items,
                        int num_classes) {
    require(!items.empty(), "refusing to write an empty shard");
    BinWriter w(path);
    w.bytes(kShardMagic, 8);
    w.pod(kShardVersion);
    w.pod(uint32_t(items.size()));
    w.pod(uint16_t(items[0].image.h));
    w.pod(uint16_t(items[0].image.w));
    w.pod(uint16_t(items[0].image.c));
    w.pod(uint16_t(num_classes));
    for (const auto& it : items) {
        require(it.image.same_shape(items[0].image), "shard images must share one shape");
        w.pod(uint16_t(it.class_label));
        w.bytes(it.image.data.data(), it.image.data.size());
    }
}

inline std::vector<LabeledImage> read_shard(const std::string& path) {
    BinReader r(path);
    char magic[8];
    r.bytes(magic, 8);
    if (std::memcmp(magic, kShardMagic, 8) != 0) throw IoError("not a shard file", path);
    uint32_t version = r.pod<uint32_t>();
    if (version != kShardVersion) throw IoError("unsupported shard version", path);
    uint32_t count = r.pod<uint32_t>();
    int h = r.pod<uint16_t>(), w = r.pod<uint16_t>(), c = r.pod<uint16_t>();
    r.pod<uint16_t>();  // num_classes, informational
    std::vector<LabeledImage> items;
    items.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        LabeledImage it;
        it.class_label = r.pod<uint16_t>();
        it.image = Image(h, w, c);
        r.bytes(it.image.data.data(), it.image.data.size());
        items.push_back(std::move(it));
    }
    return items;
}

// ---------------------------------------------------------------------------
// Rendering

/// Renders the examples of one domain. Pure in (spec, seed, count): the
/// stream is derived from (seed, spec.domain_id) only, so domains can render
/// concurrently and re-runs are byte-identical.
inline std::vector<LabeledImage> render_domain(const DomainSpec& spec, GlyphSource& glyphs,
                                               PatchSource* patches, int count, uint64_t seed) {
    require(count > 0, "render_domain: count must be positive");
    require(glyphs.num_classes() == spec.num_classes, "glyph source class count mismatch");
    if (mode_uses_background(spec.mode))
        require(patches != nullptr, "backgrounded mode needs a patch source");

    Rng rng = Rng::derive(seed, uint64_t(spec.domain_id));
    std::vector<LabeledImage> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        int label = i % spec.num_classes;  // balanced classes
        Glyph glyph = glyphs.sample(label, rng);
        Image fg3 = replicate_channels(glyph.pixels, 3);
        Image rendered;
        if (spec.mode == RenderMode::Or) {
            rendered = fg3;
        } else {
            BackgroundPatch patch = patches->sample(rng);
            Image blended = blend_abs_diff(fg3, patch.pixels);
            rendered = apply_mode(blended, glyph.pixels, spec.mode, fg3);
        }
        out.push_back(LabeledImage{std::move(rendered), label});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Corpus generation config

struct GenerateConfig {
    std::vector<std::string> foregrounds;   // glyph family preset names
    std::vector<std::string> backgrounds;   // patch source names
    std::vector<RenderMode> modes;          // backgrounded modes of the grid
    bool include_original = true;           // adds one Or domain per foreground
    int count_per_domain = 500;
    int count_original = 250;
    int num_classes = 10;
    uint64_t seed = 0;
    bool write_png = true;

    /// F foregrounds x 2 backgrounds x {BB,WB,Cr,GS} plus Or: N = F x 9.
    static GenerateConfig grid(int num_foregrounds, int count, uint64_t seed) {
        require(num_foregrounds >= 1 && num_foregrounds <= 6, "grid supports 1..6 foreground families");
        GenerateConfig c;
        const char* fams[] = {"strokes-a", "strokes-b", "strokes-c", "strokes-d", "strokes-e", "strokes-f"};
        for (int i = 0; i < num_foregrounds; ++i) c.foregrounds.push_back(fams[i]);
        c.backgrounds = {"synthetic-texture-A", "synthetic-texture-B"};
        c.modes = {RenderMode::BB, RenderMode::WB, RenderMode::Cr, RenderMode::GS};
        c.include_original = true;
        c.count_per_domain = count;
        c.count_original = std::max(1, count / 2);
        c.seed = seed;
        return c;
    }

    static GenerateConfig desk_default(uint64_t seed) { return grid(3, 500, seed); }

    static GenerateConfig full_default(uint64_t seed) {
        GenerateConfig c = grid(6, 40000, seed);
        c.count_original = 20000;
        return c;
    }

    nlohmann::json to_json() const {
        std::vector<std::string> mode_names;
        for (auto m : modes) mode_names.push_back(to_string(m));
        return {{"foregrounds", foregrounds},
                {"backgrounds", backgrounds},
                {"modes", mode_names},
                {"include_original", include_original},
                {"count_per_domain", count_per_domain},
                {"count_original", count_original},
                {"num_classes", num_classes},
                {"seed", seed},
                {"write_png", write_png}};
    }

    static GenerateConfig from_json(const nlohmann::json& j) {
        GenerateConfig c;
        c.foregrounds = j.at("foregrounds").get<std::vector<std::string>>();
        c.backgrounds = j.at("backgrounds").get<std::vector<std::string>>();
        for (const auto& m : j.at("modes")) c.modes.push_back(render_mode_from_string(m.get<std::string>()));
        c.include_original = j.value("include_original", true);
        c.count_per_domain = j.at("count_per_domain").get<int>();
        c.count_original = j.value("count_original", std::max(1, c.count_per_domain / 2));
        c.num_classes = j.value("num_classes", 10);
        c.seed = j.value("seed", uint64_t(0));
        c.write_png = j.value("write_png", true);
        return c;
    }

    /// Expands the grid into the ordered domain list (ids assigned 0..N-1).
    std::vector<DomainSpec> expand() const {
        require(!foregrounds.empty(), "config needs at least one foreground family");
        for (auto m : modes)
            require(mode_uses_background(m), "Or belongs in include_original, not in modes");
        if (!modes.empty()) require(!backgrounds.empty(), "backgrounded modes need a background source");
        std::vector<DomainSpec> specs;
        for (const auto& fg : foregrounds) {
            for (const auto& bg : backgrounds)
                for (auto mode : modes) {
                    DomainSpec d;
                    d.domain_id = int(specs.size());
                    d.foreground_set = fg;
                    d.background_source = bg;
                    d.mode = mode;
                    d.num_classes = num_classes;
                    d.count = count_per_domain;
                    specs.push_back(std::move(d));
                }
            if (include_original) {
                DomainSpec d;
                d.domain_id = int(specs.size());
                d.foreground_set = fg;
                d.mode = RenderMode::Or;
                d.num_classes = num_classes;
                d.count = count_original;
                specs.push_back(std::move(d));
            }
        }
        return specs;
    }
};

// ---------------------------------------------------------------------------
// build_corpus

namespace detail {

struct ChannelStats {
    std::array<double, 3> sum{0, 0, 0};
    std::array<double, 3> sumsq{0, 0, 0};
    int64_t pixels = 0;

    void add(const Image& img) {
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x)
                for (int ch = 0; ch < 3; ++ch) {
                    double v = img.at(y, x, ch) / 255.0;
                    sum[ch] += v;
                    sumsq[ch] += v * v;
                }
        pixels += int64_t(img.h) * img.w;
    }

    void merge(const ChannelStats& o) {
        for (int ch = 0; ch < 3; ++ch) {
            sum[ch] += o.sum[ch];
            sumsq[ch] += o.sumsq[ch];
        }
        pixels += o.pixels;
    }
};

} // namespace detail

/// Renders an explicit domain list, writes shards (and optionally PNGs),
/// computes corpus channel statistics, and writes manifest.json. Domains are
/// rendered on a small thread pool; the result does not depend on scheduling.
inline DatasetManifest build_corpus_from_specs(std::vector<DomainSpec> specs, uint64_t seed,
                                               const std::string& out_dir, bool emit_png,
                                               int num_threads = int(std::thread::hardware_concurrency())) {
    namespace fs = std::filesystem;

    fs::create_directories(out_dir);
    fs::create_directories(out_dir + "/shards");

    std::vector<detail::ChannelStats> stats(specs.size());
    std::vector<std::string> errors(specs.size());

    auto render_one = [&](size_t idx) {
        DomainSpec& spec = specs[idx];
        try {
            auto style = glyph_style_preset(spec.foreground_set);
            ProceduralGlyphs glyphs(style, spec.num_classes);
            std::unique_ptr<PatchSource> patches;
            if (mode_uses_background(spec.mode)) patches = make_patch_source(spec.background_source);

            auto items = render_domain(spec, glyphs, patches.get(), spec.count, seed);

            char shard_name[64];
            std::snprintf(shard_name, sizeof(shard_name), "shards/domain_%03d.shard", spec.domain_id);
            spec.shard_path = shard_name;
            write_shard(out_dir + "/" + shard_name, items, spec.num_classes);

            if (emit_png) {
                char dir_name[128];
                std::snprintf(dir_name, sizeof(dir_name), "%s/png/d%03d_%s_%s", out_dir.c_str(),
                              spec.domain_id, spec.foreground_set.c_str(), to_string(spec.mode));
                fs::create_directories(dir_name);
                for (size_t i = 0; i < items.size(); ++i) {
                    char img_name[192];
                    std::snprintf(img_name, sizeof(img_name), "%s/img_%05zu_c%d.png", dir_name, i,
                                  items[i].class_label);
                    write_png(items[i].image, img_name);
                }
            }
            for (const auto& it : items) stats[idx].add(it.image);
        } catch (const std::exception& e) {
            errors[idx] = e.what();
        }
    };

    num_threads = std::max(1, num_threads);
    if (num_threads == 1 || specs.size() <= 1) {
        for (size_t i = 0; i < specs.size(); ++i) render_one(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
        for (int t = 0; t < num_threads; ++t)
            pool.emplace_back([&] {
                for (size_t i = next.fetch_add(1); i < specs.size(); i = next.fetch_add(1)) render_one(i);
            });
        for (auto& th : pool) th.join();
    }
    for (size_t i = 0; i < specs.size(); ++i)
        if (!errors[i].empty())
            throw IoError("rendering domain " + std::to_string(i) + " failed: " + errors[i], out_dir);

    detail::ChannelStats total;
    for (const auto& s : stats) total.merge(s);

    DatasetManifest manifest;
    manifest.seed = seed;
    manifest.root = out_dir;
    manifest.domains = std::move(specs);
    for (int ch = 0; ch < 3; ++ch) {
        double mean = total.sum[ch] / double(total.pixels);
        double var = total.sumsq[ch] / double(total.pixels) - mean * mean;
        manifest.channel_mean[ch] = mean;
        manifest.channel_std[ch] = std::max(std::sqrt(std::max(var, 0.0)), 1e-6);
    }
    manifest.validate();
    manifest.save(out_dir + "/manifest.json");
    return manifest;
}

/// Renders the full grid a GenerateConfig describes.
inline DatasetManifest build_corpus(const GenerateConfig& config, const std::string& out_dir,
                                    int num_threads = int(std::thread::hardware_concurrency())) {
    return build_corpus_from_specs(config.expand(), config.seed, out_dir, config.write_png,
                                   num_threads);
}

/// Loads one domain's examples from its shard.
inline std::vector<LabeledImage> load_domain(const DatasetManifest& manifest, int domain_id) {
    const DomainSpec& spec = manifest.domain(domain_id);
    require(!spec.shard_path.empty(), "domain has no shard on disk");
    return read_shard(manifest.root + "/" + spec.shard_path);
}

/// Deterministic 80/20 split by seeded hash of the example index; used by
/// every training/evaluation consumer so splits never overlap.
inline bool is_eval_example(uint64_t corpus_seed, int domain_id, int index) {
    return Rng::mix(Rng::mix(corpus_seed ^ 0x5eed0517ull, uint64_t(domain_id)), uint64_t(index)) % 5 == 0;
}

} // namespace d2v::datagen
