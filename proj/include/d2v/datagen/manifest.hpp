#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "d2v/core/error.hpp"
#include "d2v/datagen/blend.hpp"

namespace d2v::datagen {

constexpr int kManifestSchemaVersion = 1;

/// One cell of the (foreground, background, mode) grid.
struct DomainSpec {
    int domain_id = -1;
    std::string foreground_set;
    std::string background_source;  // empty iff mode == Or
    RenderMode mode = RenderMode::Cr;
    int num_classes = 10;
    int count = 0;
    std::string shard_path;

    void validate() const {
        bool has_bg = !background_source.empty();
        if (mode == RenderMode::Or)
            require(!has_bg, "Or-mode domain must not name a background source");
        else
            require(has_bg, "backgrounded mode requires a background source");
        require(count > 0, "domain count must be positive");
        require(num_classes >= 2, "domain needs at least two classes");
    }

    std::string label() const {
        std::string s = foreground_set;
        if (!background_source.empty()) s += "/" + background_source;
        s += "/";
        s += to_string(mode);
        return s;
    }
};

/// The corpus layout: every domain, the generation seed, and the per-channel
/// input statistics used to standardize model inputs.
struct DatasetManifest {
    int schema_version = kManifestSchemaVersion;
    uint64_t seed = 0;
    std::string root;  // directory holding the shards; not serialized
    std::vector<DomainSpec> domains;
    std::array<double, 3> channel_mean{0.5, 0.5, 0.5};  // on the pixel/255 scale
    std::array<double, 3> channel_std{0.25, 0.25, 0.25};

    void validate() const {
        for (size_t i = 0; i < domains.size(); ++i) {
            require(domains[i].domain_id == int(i), "domain_ids must be contiguous 0..N-1");
            domains[i].validate();
        }
    }

    int num_domains() const { return int(domains.size()); }

    const DomainSpec& domain(int id) const {
        require(id >= 0 && id < num_domains(), "domain lookup out of range: " + std::to_string(id));
        return domains[id];
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["schema_version"] = schema_version;
        j["seed"] = seed;
        j["channel_mean"] = channel_mean;
        j["channel_std"] = channel_std;
        j["domains"] = nlohmann::json::array();
        for (const auto& d : domains) {
            j["domains"].push_back({{"domain_id", d.domain_id},
                                    {"foreground_set", d.foreground_set},
                                    {"background_source", d.background_source},
                                    {"mode", to_string(d.mode)},
                                    {"num_classes", d.num_classes},
                                    {"count", d.count},
                                    {"shard_path", d.shard_path}});
        }
        return j;
    }

    static DatasetManifest from_json(const nlohmann::json& j) {
        DatasetManifest m;
        m.schema_version = j.at("schema_version").get<int>();
        require(m.schema_version == kManifestSchemaVersion,
                "unsupported manifest schema version " + std::to_string(m.schema_version));
        m.seed = j.at("seed").get<uint64_t>();
        m.channel_mean = j.at("channel_mean").get<std::array<double, 3>>();
        m.channel_std = j.at("channel_std").get<std::array<double, 3>>();
        for (const auto& dj : j.at("domains")) {
            DomainSpec d;
            d.domain_id = dj.at("domain_id").get<int>();
            d.foreground_set = dj.at("foreground_set").get<std::string>();
            d.background_source = dj.at("background_source").get<std::string>();
            d.mode = render_mode_from_string(dj.at("mode").get<std::string>());
            d.num_classes = dj.at("num_classes").get<int>();
            d.count = dj.at("count").get<int>();
            d.shard_path = dj.at("shard_path").get<std::string>();
            m.domains.push_back(std::move(d));
        }
        m.validate();
        return m;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw IoError("cannot write manifest", path);
        out << to_json().dump(2) << "\n";
    }

    static DatasetManifest load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot read manifest", path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw IoError(std::string("manifest parse error: ") + e.what(), path);
        }
        DatasetManifest m = from_json(j);
        auto slash = path.find_last_of('/');
        m.root = slash == std::string::npos ? std::string(".") : path.substr(0, slash);
        return m;
    }
};

} // namespace d2v::datagen
