#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "d2v/core/error.hpp"
#include "d2v/core/rng.hpp"
#include "d2v/nn/layers.hpp"

namespace d2v::model {

using nn::Mat;
using nn::Mode;

/// Dimensions of every component. The reference preset follows the published
/// architecture table; the desk preset is the proportionally shrunk variant
/// used by fast tests and the acceptance pipeline.
struct ModelDims {
    int image_size = 32;
    int in_channels = 3;
    int conv1 = 64, conv2 = 64, conv3 = 128;
    int disent_hidden = 3072;
    int latent = 2048;
    int dc_hidden = 256;
    int mine_hidden = 512;
    int num_classes = 10;
    int num_domains = 1;
    double dropout = 0.5;
    double leaky_slope = 0.01;

    int flat_dim() const {
        int s = image_size / 4;  // two 2x poolings
        return conv3 * s * s;
    }

    static ModelDims reference(int num_classes, int num_domains) {
        ModelDims d;
        d.num_classes = num_classes;
        d.num_domains = num_domains;
        return d;
    }

    static ModelDims desk(int num_classes, int num_domains) {
        ModelDims d;
        d.conv1 = 16;
        d.conv2 = 16;
        d.conv3 = 32;
        d.disent_hidden = 768;
        d.latent = 256;
        d.dc_hidden = 64;
        d.mine_hidden = 128;
        d.num_classes = num_classes;
        d.num_domains = num_domains;
        return d;
    }

    /// Tiny dims (everything <= 16) for finite-difference gradient checks.
    static ModelDims tiny(int num_classes = 3, int num_domains = 4) {
        ModelDims d;
        d.image_size = 8;
        d.conv1 = 2;
        d.conv2 = 2;
        d.conv3 = 3;
        d.disent_hidden = 10;
        d.latent = 6;
        d.dc_hidden = 5;
        d.mine_hidden = 7;
        d.num_classes = num_classes;
        d.num_domains = num_domains;
        return d;
    }

    nlohmann::json to_json() const {
        return {{"image_size", image_size},   {"in_channels", in_channels},
                {"conv1", conv1},             {"conv2", conv2},
                {"conv3", conv3},             {"disent_hidden", disent_hidden},
                {"latent", latent},           {"dc_hidden", dc_hidden},
                {"mine_hidden", mine_hidden}, {"num_classes", num_classes},
                {"num_domains", num_domains}, {"dropout", dropout},
                {"leaky_slope", leaky_slope}};
    }

    static ModelDims from_json(const nlohmann::json& j) {
        ModelDims d;
        d.image_size = j.at("image_size");
        d.in_channels = j.at("in_channels");
        d.conv1 = j.at("conv1");
        d.conv2 = j.at("conv2");
        d.conv3 = j.at("conv3");
        d.disent_hidden = j.at("disent_hidden");
        d.latent = j.at("latent");
        d.dc_hidden = j.at("dc_hidden");
        d.mine_hidden = j.at("mine_hidden");
        d.num_classes = j.at("num_classes");
        d.num_domains = j.at("num_domains");
        d.dropout = j.at("dropout");
        d.leaky_slope = j.at("leaky_slope");
        return d;
    }
};

/// Flat description of every layer, kept in the checkpoint header and used
/// to cross-check actual parameter counts.
struct LayerDesc {
    std::string kind;
    int in = 0, out = 0, kernel = 0, stride = 0, pad = 0;
    double rate = 0.0;

    int64_t param_count() const {
        if (kind == "Conv2d") return int64_t(out) * in * kernel * kernel + out;
        if (kind == "Linear") return int64_t(out) * in + out;
        if (kind == "BatchNorm") return 2 * int64_t(out);
        return 0;
    }

    nlohmann::json to_json() const {
        nlohmann::json j{{"kind", kind}};
        if (in) j["in"] = in;
        if (out) j["out"] = out;
        if (kernel) j["kernel"] = kernel, j["stride"] = stride, j["pad"] = pad;
        if (rate != 0.0) j["rate"] = rate;
        return j;
    }
};

/// Per-component layer lists derived from ModelDims.
inline std::map<std::string, std::vector<LayerDesc>> network_spec(const ModelDims& d) {
    const int hw1 = d.image_size, hw2 = d.image_size / 2, hw3 = d.image_size / 4;
    std::map<std::string, std::vector<LayerDesc>> spec;
    spec["G"] = {
        {"Conv2d", d.in_channels, d.conv1, 5, 1, 2}, {"BatchNorm", 0, d.conv1}, {"ReLU"}, {"MaxPool2", 0, 0},
        {"Conv2d", d.conv1, d.conv2, 5, 1, 2},       {"BatchNorm", 0, d.conv2}, {"ReLU"}, {"MaxPool2", 0, 0},
        {"Conv2d", d.conv2, d.conv3, 5, 1, 2},       {"BatchNorm", 0, d.conv3}, {"ReLU"},
    };
    (void)hw1; (void)hw2; (void)hw3;
    auto disent = std::vector<LayerDesc>{
        {"Linear", d.flat_dim(), d.disent_hidden}, {"BatchNorm", 0, d.disent_hidden}, {"ReLU"},
        {"Dropout", 0, 0, 0, 0, 0, d.dropout},     {"Linear", d.disent_hidden, d.latent},
        {"BatchNorm", 0, d.latent},                {"ReLU"},
    };
    spec["Dds"] = disent;
    spec["Dcs"] = disent;
    spec["C"] = {{"Linear", d.latent, d.num_classes}, {"BatchNorm", 0, d.num_classes}, {"Softmax"}};
    spec["DC"] = {{"Linear", d.latent, d.dc_hidden}, {"LeakyReLU"},
                  {"Linear", d.dc_hidden, d.num_domains}, {"LeakyReLU"}, {"Softmax"}};
    spec["R"] = {{"Linear", 2 * d.latent, d.flat_dim()}};
    spec["T"] = {{"Linear", d.latent, d.mine_hidden}, {"Linear", d.latent, d.mine_hidden},
                 {"LeakyReLU"}, {"Linear", d.mine_hidden, 1}};
    return spec;
}

inline nlohmann::json network_spec_json(const ModelDims& d) {
    nlohmann::json j;
    for (const auto& [comp, layers] : network_spec(d)) {
        j[comp] = nlohmann::json::array();
        for (const auto& l : layers) j[comp].push_back(l.to_json());
    }
    return j;
}

// ---------------------------------------------------------------------------

/// The MINE statistic network T(p, q): one linear branch per input, summed,
/// LeakyReLU, then a scalar head. Stand-alone (not a Sequential) because the
/// training step evaluates it on two pairings per batch and needs explicit
/// caches.
template <class S>
class MineNet {
public:
    struct Cache {
        Mat<S> p, q, pre, act;
    };

    MineNet() = default;

    MineNet(int latent, int hidden, double slope, Rng& rng) : slope_(S(slope)) {
        wp_.resize(hidden, latent);
        wq_.resize(hidden, latent);
        nn::he_uniform_init(wp_, latent, rng);
        nn::he_uniform_init(wq_, latent, rng);
        bp_ = Mat<S>::Zero(1, hidden);
        bq_ = Mat<S>::Zero(1, hidden);
        wo_ = Mat<S>::Zero(1, hidden);
        nn::he_uniform_init(wo_, hidden, rng);
        bo_ = Mat<S>::Zero(1, 1);
        gwp_ = Mat<S>::Zero(hidden, latent);
        gwq_ = Mat<S>::Zero(hidden, latent);
        gbp_ = Mat<S>::Zero(1, hidden);
        gbq_ = Mat<S>::Zero(1, hidden);
        gwo_ = Mat<S>::Zero(1, hidden);
        gbo_ = Mat<S>::Zero(1, 1);
    }

    /// Row-wise statistic values, one scalar per (p, q) row pair.
    Mat<S> forward(const Mat<S>& p, const Mat<S>& q, Cache& cache) const {
        require(p.rows() == q.rows() && p.cols() == q.cols(), "MineNet: input shape mismatch");
        cache.p = p;
        cache.q = q;
        cache.pre = p * wp_.transpose() + q * wq_.transpose();
        cache.pre.rowwise() += (bp_ + bq_).row(0);
        cache.act = (cache.pre.array() > S(0))
                        .select(cache.pre, cache.pre * slope_);
        return (cache.act * wo_.transpose()).rowwise() + bo_.row(0);
    }

    /// Accumulates parameter gradients; optionally returns input gradients.
    void backward(const Cache& cache, const Mat<S>& dt, Mat<S>* dp, Mat<S>* dq) {
        gwo_.noalias() += dt.transpose() * cache.act;
        gbo_(0, 0) += dt.sum();
        Mat<S> dact = dt * wo_;
        Mat<S> dpre = (cache.pre.array() > S(0)).select(dact, dact * slope_);
        gwp_.noalias() += dpre.transpose() * cache.p;
        gwq_.noalias() += dpre.transpose() * cache.q;
        gbp_.row(0) += dpre.colwise().sum();
        gbq_.row(0) += dpre.colwise().sum();
        if (dp) *dp = dpre * wp_;
        if (dq) *dq = dpre * wq_;
    }

    void collect_params(const std::string& prefix, std::vector<nn::ParamRef<S>>& out) {
        out.push_back({prefix + ".fc_p.W", &wp_, &gwp_});
        out.push_back({prefix + ".fc_p.b", &bp_, &gbp_});
        out.push_back({prefix + ".fc_q.W", &wq_, &gwq_});
        out.push_back({prefix + ".fc_q.b", &bq_, &gbq_});
        out.push_back({prefix + ".fc_out.W", &wo_, &gwo_});
        out.push_back({prefix + ".fc_out.b", &bo_, &gbo_});
    }

    /// Zeroes the final layer (used by a loss identity test).
    void zero_output_layer() {
        wo_.setZero();
        bo_.setZero();
    }

private:
    S slope_ = S(0.01);
    Mat<S> wp_, bp_, wq_, bq_, wo_, bo_;
    Mat<S> gwp_, gbp_, gwq_, gbq_, gwo_, gbo_;
};

// ---------------------------------------------------------------------------

/// The full disentanglement model: feature generator G, the two disentangler
/// heads, category classifier C, domain classifier DC, reconstructor R and
/// the MINE statistic network T.
template <class S>
class Net {
public:
    explicit Net(const ModelDims& dims, uint64_t seed) : dims_(dims), rng_(Rng::mix(seed, 0xD2Fu)) {
        const int img = dims.image_size;
        require(img % 4 == 0, "image size must be divisible by 4");
        G.template add<nn::Conv2d<S>>(dims.in_channels, dims.conv1, img, img, 5, 1, 2, rng_);
        G.template add<nn::BatchNorm<S>>(dims.conv1, img * img);
        G.template add<nn::ReLU<S>>();
        G.template add<nn::MaxPool2<S>>(dims.conv1, img, img);
        G.template add<nn::Conv2d<S>>(dims.conv1, dims.conv2, img / 2, img / 2, 5, 1, 2, rng_);
        G.template add<nn::BatchNorm<S>>(dims.conv2, img * img / 4);
        G.template add<nn::ReLU<S>>();
        G.template add<nn::MaxPool2<S>>(dims.conv2, img / 2, img / 2);
        G.template add<nn::Conv2d<S>>(dims.conv2, dims.conv3, img / 4, img / 4, 5, 1, 2, rng_);
        G.template add<nn::BatchNorm<S>>(dims.conv3, img * img / 16);
        G.template add<nn::ReLU<S>>();

        auto build_disentangler = [&](nn::Sequential<S>& d) {
            d.template add<nn::Linear<S>>(dims.flat_dim(), dims.disent_hidden, rng_);
            d.template add<nn::BatchNorm<S>>(dims.disent_hidden);
            d.template add<nn::ReLU<S>>();
            d.template add<nn::Dropout<S>>(dims.dropout, &rng_);
            d.template add<nn::Linear<S>>(dims.disent_hidden, dims.latent, rng_);
            d.template add<nn::BatchNorm<S>>(dims.latent);
            d.template add<nn::ReLU<S>>();
        };
        build_disentangler(Dds);
        build_disentangler(Dcs);

        C.template add<nn::Linear<S>>(dims.latent, dims.num_classes, rng_);
        C.template add<nn::BatchNorm<S>>(dims.num_classes);
        C.template add<nn::Softmax<S>>();

        DC.template add<nn::Linear<S>>(dims.latent, dims.dc_hidden, rng_);
        DC.template add<nn::LeakyReLU<S>>(dims.leaky_slope);
        DC.template add<nn::Linear<S>>(dims.dc_hidden, dims.num_domains, rng_);
        DC.template add<nn::LeakyReLU<S>>(dims.leaky_slope);
        DC.template add<nn::Softmax<S>>();

        R.template add<nn::Linear<S>>(2 * dims.latent, dims.flat_dim(), rng_);

        T = MineNet<S>(dims.latent, dims.mine_hidden, dims.leaky_slope, rng_);

        validate_param_counts();
    }

    const ModelDims& dims() const { return dims_; }

    /// Indices of the post-ReLU conv activations inside G (Gram inputs).
    static const std::vector<int>& gram_capture_points() {
        static const std::vector<int> pts{2, 6, 10};
        return pts;
    }

    /// Channel counts of the captured conv activations.
    std::vector<int> gram_channels() const { return {dims_.conv1, dims_.conv2, dims_.conv3}; }

    struct Forward {
        Mat<S> f_G, f_ds, f_cs;
        Mat<S> class_probs_cs;   // C(f_cs): the classification path
        Mat<S> domain_probs_ds;  // DC(f_ds): the domain path
        Mat<S> class_probs_ds;   // C(f_ds): adversarial probe
        Mat<S> domain_probs_cs;  // DC(f_cs): adversarial probe
        Mat<S> recon;            // R(f_ds (+) f_cs)
        std::vector<Mat<S>> conv_acts;
    };

    /// Full inference/diagnostic forward. Training composes components
    /// directly (see the trainer) to control gradient routing.
    Forward forward(const Mat<S>& x, Mode mode, bool want_conv_acts = false) {
        require(x.cols() == Eigen::Index(dims_.in_channels) * dims_.image_size * dims_.image_size,
                "Net::forward: input dim mismatch");
        Forward f;
        if (want_conv_acts)
            f.f_G = G.forward_captured(x, mode, gram_capture_points(), f.conv_acts);
        else
            f.f_G = G.forward(x, mode);
        f.f_ds = Dds.forward(f.f_G, mode);
        f.f_cs = Dcs.forward(f.f_G, mode);
        f.class_probs_cs = C.forward(f.f_cs, mode);
        f.class_probs_ds = C.forward(f.f_ds, mode);
        f.domain_probs_ds = DC.forward(f.f_ds, mode);
        f.domain_probs_cs = DC.forward(f.f_cs, mode);
        Mat<S> cat(f.f_ds.rows(), 2 * dims_.latent);
        cat << f.f_ds, f.f_cs;
        f.recon = R.forward(cat, mode);
        return f;
    }

    /// Row-wise MINE statistic on externally supplied feature pairs.
    Mat<S> mine_statistic(const Mat<S>& p, const Mat<S>& q) {
        require(p.cols() == dims_.latent && q.cols() == dims_.latent,
                "mine_statistic: inputs must have the latent dimension");
        typename MineNet<S>::Cache cache;
        return T.forward(p, q, cache);
    }

    std::vector<nn::ParamRef<S>> params_G() { return G.params("G"); }
    std::vector<nn::ParamRef<S>> params_Dds() { return Dds.params("Dds"); }
    std::vector<nn::ParamRef<S>> params_Dcs() { return Dcs.params("Dcs"); }
    std::vector<nn::ParamRef<S>> params_C() { return C.params("C"); }
    std::vector<nn::ParamRef<S>> params_DC() { return DC.params("DC"); }
    std::vector<nn::ParamRef<S>> params_R() { return R.params("R"); }
    std::vector<nn::ParamRef<S>> params_T() {
        std::vector<nn::ParamRef<S>> out;
        T.collect_params("T", out);
        return out;
    }

    std::vector<nn::ParamRef<S>> all_params() {
        std::vector<nn::ParamRef<S>> out;
        G.collect_params("G", out);
        Dds.collect_params("Dds", out);
        Dcs.collect_params("Dcs", out);
        C.collect_params("C", out);
        DC.collect_params("DC", out);
        R.collect_params("R", out);
        T.collect_params("T", out);
        return out;
    }

    std::vector<nn::BufferRef<S>> all_buffers() {
        std::vector<nn::BufferRef<S>> out;
        G.collect_buffers("G", out);
        Dds.collect_buffers("Dds", out);
        Dcs.collect_buffers("Dcs", out);
        C.collect_buffers("C", out);
        DC.collect_buffers("DC", out);
        R.collect_buffers("R", out);
        return out;
    }

    void zero_all_grads() {
        for (auto& p : all_params()) p.grad->setZero();
    }

    Rng& rng() { return rng_; }

    nn::Sequential<S> G, Dds, Dcs, C, DC, R;
    MineNet<S> T;

private:
    void validate_param_counts() {
        int64_t expected = 0;
        for (const auto& [comp, layers] : network_spec(dims_))
            for (const auto& l : layers) expected += l.param_count();
        int64_t actual = nn::parameter_count(all_params());
        require(actual == expected, "parameter count " + std::to_string(actual) +
                                        " does not match the network spec's " + std::to_string(expected));
    }

    ModelDims dims_;
    Rng rng_;
};

} // namespace d2v::model
