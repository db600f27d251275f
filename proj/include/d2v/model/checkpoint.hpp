#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "d2v/core/serial.hpp"
#include "d2v/model/network.hpp"

namespace d2v::model {

constexpr uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'D', '2', 'V', 'C', 'K', 'P', 'T', '1'};

/// Named-tensor container with a JSON header. Header carries the network
/// spec, model dims, scalar width, and arbitrary metadata; tensors carry the
/// exact parameter/buffer bytes (round-trips are bit-exact).
template <class S>
struct Checkpoint {
    nlohmann::json header;
    std::vector<std::pair<std::string, Mat<S>>> tensors;

    void add(const std::string& name, const Mat<S>& m) { tensors.push_back({name, m}); }

    const Mat<S>* find(const std::string& name) const {
        for (const auto& [n, m] : tensors)
            if (n == name) return &m;
        return nullptr;
    }

    void save(const std::string& path) const {
        BinWriter w(path);
        w.bytes(kCheckpointMagic, 8);
        w.pod(kCheckpointVersion);
        w.str(header.dump());
        w.pod(uint32_t(tensors.size()));
        for (const auto& [name, m] : tensors) {
            w.str(name);
            w.pod(uint8_t(sizeof(S)));
            w.pod(uint32_t(m.rows()));
            w.pod(uint32_t(m.cols()));
            w.bytes(m.data(), sizeof(S) * size_t(m.size()));
        }
    }

    static Checkpoint load(const std::string& path) {
        BinReader r(path);
        char magic[8];
        r.bytes(magic, 8);
        if (std::memcmp(magic, kCheckpointMagic, 8) != 0) throw IoError("not a checkpoint file", path);
        uint32_t version = r.pod<uint32_t>();
        if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version", path);
        Checkpoint ck;
        ck.header = nlohmann::json::parse(r.str());
        uint32_t count = r.pod<uint32_t>();
        for (uint32_t i = 0; i < count; ++i) {
            std::string name = r.str();
            uint8_t width = r.pod<uint8_t>();
            if (width != sizeof(S))
                throw IoError("checkpoint scalar width " + std::to_string(width) +
                                  " does not match this build",
                              path);
            uint32_t rows = r.pod<uint32_t>(), cols = r.pod<uint32_t>();
            Mat<S> m(rows, cols);
            r.bytes(m.data(), sizeof(S) * size_t(m.size()));
            ck.tensors.push_back({std::move(name), std::move(m)});
        }
        return ck;
    }
};

/// Snapshots a model (parameters + buffers + dropout RNG state) into a
/// checkpoint. `meta` lands in the header under "meta".
template <class S>
Checkpoint<S> snapshot(Net<S>& net, nlohmann::json meta = {}) {
    Checkpoint<S> ck;
    ck.header["dims"] = net.dims().to_json();
    ck.header["network_spec"] = network_spec_json(net.dims());
    ck.header["scalar_bytes"] = sizeof(S);
    ck.header["rng_state"] = net.rng().state();
    ck.header["meta"] = std::move(meta);
    for (const auto& p : net.all_params()) ck.add(p.name, *p.value);
    for (const auto& b : net.all_buffers()) ck.add(b.name, *b.value);
    return ck;
}

/// Restores tensors into an existing net (dims must match).
template <class S>
void restore(Net<S>& net, const Checkpoint<S>& ck) {
    for (const auto& p : net.all_params()) {
        const Mat<S>* m = ck.find(p.name);
        require(m != nullptr, "checkpoint missing tensor " + p.name);
        require(m->rows() == p.value->rows() && m->cols() == p.value->cols(),
                "checkpoint tensor shape mismatch for " + p.name);
        *p.value = *m;
    }
    for (const auto& b : net.all_buffers()) {
        const Mat<S>* m = ck.find(b.name);
        require(m != nullptr, "checkpoint missing buffer " + b.name);
        *b.value = *m;
    }
    net.rng().set_state(ck.header.at("rng_state").template get<uint64_t>());
}

/// Rebuilds a model from a checkpoint file.
template <class S>
std::unique_ptr<Net<S>> load_net(const std::string& path, Checkpoint<S>* out_ck = nullptr) {
    Checkpoint<S> ck = Checkpoint<S>::load(path);
    ModelDims dims = ModelDims::from_json(ck.header.at("dims"));
    auto net = std::make_unique<Net<S>>(dims, 0);
    restore(*net, ck);
    if (out_ck) *out_ck = std::move(ck);
    return net;
}

} // namespace d2v::model
