#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "d2v/core/error.hpp"
#include "d2v/core/rng.hpp"

namespace d2v::nn {

/// Batches are row-major matrices: one example per row. Convolutional data
/// uses CHW flattening within the row.
template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Mode { train, eval };

/// Non-owning handle to a trainable tensor and its gradient.
template <class S>
struct ParamRef {
    std::string name;
    Mat<S>* value;
    Mat<S>* grad;
};

/// Non-owning handle to a persistent non-trainable tensor (BN running stats).
template <class S>
struct BufferRef {
    std::string name;
    Mat<S>* value;
};

template <class S>
class Layer {
public:
    virtual ~Layer() = default;
    virtual Mat<S> forward(const Mat<S>& x, Mode mode) = 0;
    /// Accumulates parameter gradients and returns the input gradient.
    virtual Mat<S> backward(const Mat<S>& dy) = 0;
    virtual void collect_params(const std::string& prefix, std::vector<ParamRef<S>>& out) {}
    virtual void collect_buffers(const std::string& prefix, std::vector<BufferRef<S>>& out) {}
    virtual const char* kind() const = 0;
};

template <class S>
void he_uniform_init(Mat<S>& w, int fan_in, Rng& rng) {
    double bound = std::sqrt(6.0 / double(fan_in));
    for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = S(rng.uniform(-bound, bound));
}

// ---------------------------------------------------------------------------

template <class S>
class Linear : public Layer<S> {
public:
    Linear(int in_dim, int out_dim, Rng& rng) : in_(in_dim), out_(out_dim) {
        w_.resize(out_dim, in_dim);
        he_uniform_init(w_, in_dim, rng);
        b_ = Mat<S>::Zero(1, out_dim);
        gw_ = Mat<S>::Zero(out_dim, in_dim);
        gb_ = Mat<S>::Zero(1, out_dim);
    }

    Mat<S> forward(const Mat<S>& x, Mode) override {
        require(x.cols() == in_, "Linear: input dim mismatch");
        x_ = x;
        return (x * w_.transpose()).rowwise() + b_.row(0);
    }

    Mat<S> backward(const Mat<S>& dy) override {
        gw_.noalias() += dy.transpose() * x_;
        gb_.row(0) += dy.colwise().sum();
        return dy * w_;
    }

    void collect_params(const std::string& p, std::vector<ParamRef<S>>& out) override {
        out.push_back({p + ".W", &w_, &gw_});
        out.push_back({p + ".b", &b_, &gb_});
    }

    const char* kind() const override { return "Linear"; }

    int in_dim() const { return in_; }
    int out_dim() const { return out_; }

private:
    int in_, out_;
    Mat<S> w_, b_, gw_, gb_, x_;
};

// ---------------------------------------------------------------------------

/// 2-D convolution over CHW-flattened rows, implemented as batched im2col +
/// GEMM. Stride 1 layers with pad = k/2 preserve the spatial size.
template <class S>
class Conv2d : public Layer<S> {
public:
    Conv2d(int in_ch, int out_ch, int img_h, int img_w, int kernel, int stride, int pad, Rng& rng)
        : cin_(in_ch), cout_(out_ch), h_(img_h), w_(img_w), k_(kernel), stride_(stride), pad_(pad) {
        ho_ = (h_ + 2 * pad_ - k_) / stride_ + 1;
        wo_ = (w_ + 2 * pad_ - k_) / stride_ + 1;
        patch_ = cin_ * k_ * k_;
        wmat_.resize(cout_, patch_);
        he_uniform_init(wmat_, patch_, rng);
        b_ = Mat<S>::Zero(1, cout_);
        gw_ = Mat<S>::Zero(cout_, patch_);
        gb_ = Mat<S>::Zero(1, cout_);
        build_index_map();
    }

    Mat<S> forward(const Mat<S>& x, Mode) override {
        require(x.cols() == Eigen::Index(cin_) * h_ * w_, "Conv2d: input dim mismatch");
        const Eigen::Index B = x.rows();
        const int hw = ho_ * wo_;
        cols_.resize(B * hw, patch_);
        for (Eigen::Index b = 0; b < B; ++b) {
            const S* src = x.row(b).data();
            S* dst = cols_.data() + size_t(b) * hw * patch_;
            const int* map = index_map_.data();
            for (size_t i = 0, n = index_map_.size(); i < n; ++i)
                dst[i] = map[i] >= 0 ? src[map[i]] : S(0);
        }
        // (B*hw) x cout, spatial-major; transpose per example to channel-major rows
        Mat<S> y2 = cols_ * wmat_.transpose();
        y2.rowwise() += b_.row(0);
        Mat<S> y(B, Eigen::Index(cout_) * hw);
        for (Eigen::Index b = 0; b < B; ++b)
            Eigen::Map<Mat<S>>(y.row(b).data(), cout_, hw) =
                y2.middleRows(b * hw, hw).transpose();
        return y;
    }

    Mat<S> backward(const Mat<S>& dy) override {
        const Eigen::Index B = dy.rows();
        const int hw = ho_ * wo_;
        Mat<S> dy2(B * hw, cout_);
        for (Eigen::Index b = 0; b < B; ++b)
            dy2.middleRows(b * hw, hw) =
                Eigen::Map<const Mat<S>>(dy.row(b).data(), cout_, hw).transpose();
        gw_.noalias() += dy2.transpose() * cols_;
        gb_.row(0) += dy2.colwise().sum();
        Mat<S> dcols = dy2 * wmat_;
        Mat<S> dx = Mat<S>::Zero(B, Eigen::Index(cin_) * h_ * w_);
        for (Eigen::Index b = 0; b < B; ++b) {
            S* dst = dx.row(b).data();
            const S* src = dcols.data() + size_t(b) * hw * patch_;
            const int* map = index_map_.data();
            for (size_t i = 0, n = index_map_.size(); i < n; ++i)
                if (map[i] >= 0) dst[map[i]] += src[i];
        }
        return dx;
    }

    void collect_params(const std::string& p, std::vector<ParamRef<S>>& out) override {
        out.push_back({p + ".W", &wmat_, &gw_});
        out.push_back({p + ".b", &b_, &gb_});
    }

    const char* kind() const override { return "Conv2d"; }

    int out_h() const { return ho_; }
    int out_w() const { return wo_; }
    int out_channels() const { return cout_; }

private:
    void build_index_map() {
        index_map_.resize(size_t(ho_) * wo_ * patch_);
        size_t i = 0;
        for (int oy = 0; oy < ho_; ++oy)
            for (int ox = 0; ox < wo_; ++ox)
                for (int ci = 0; ci < cin_; ++ci)
                    for (int ky = 0; ky < k_; ++ky)
                        for (int kx = 0; kx < k_; ++kx) {
                            int iy = oy * stride_ - pad_ + ky;
                            int ix = ox * stride_ - pad_ + kx;
                            index_map_[i++] = (iy >= 0 && iy < h_ && ix >= 0 && ix < w_)
                                                  ? (ci * h_ + iy) * w_ + ix
                                                  : -1;
                        }
    }

    int cin_, cout_, h_, w_, k_, stride_, pad_, ho_, wo_, patch_;
    Mat<S> wmat_, b_, gw_, gb_, cols_;
    std::vector<int> index_map_;
};

// ---------------------------------------------------------------------------

/// 2x2 max pooling with stride 2 over CHW rows.
template <class S>
class MaxPool2 : public Layer<S> {
public:
    MaxPool2(int channels, int img_h, int img_w) : c_(channels), h_(img_h), w_(img_w) {
        require(h_ % 2 == 0 && w_ % 2 == 0, "MaxPool2 expects even spatial dims");
        ho_ = h_ / 2;
        wo_ = w_ / 2;
    }

    Mat<S> forward(const Mat<S>& x, Mode) override {
        require(x.cols() == Eigen::Index(c_) * h_ * w_, "MaxPool2: input dim mismatch");
        const Eigen::Index B = x.rows();
        in_cols_ = x.cols();
        Mat<S> y(B, Eigen::Index(c_) * ho_ * wo_);
        argmax_.resize(size_t(B) * c_ * ho_ * wo_);
        for (Eigen::Index b = 0; b < B; ++b) {
            const S* src = x.row(b).data();
            S* dst = y.row(b).data();
            size_t o = size_t(b) * c_ * ho_ * wo_;
            for (int c = 0; c < c_; ++c)
                for (int oy = 0; oy < ho_; ++oy)
                    for (int ox = 0; ox < wo_; ++ox) {
                        int base = (c * h_ + 2 * oy) * w_ + 2 * ox;
                        int cand[4] = {base, base + 1, base + w_, base + w_ + 1};
                        int best = cand[0];
                        for (int i = 1; i < 4; ++i)
                            if (src[cand[i]] > src[best]) best = cand[i];
                        *dst++ = src[best];
                        argmax_[o++] = best;
                    }
        }
        return y;
    }

    Mat<S> backward(const Mat<S>& dy) override {
        const Eigen::Index B = dy.rows();
        Mat<S> dx = Mat<S>::Zero(B, in_cols_);
        for (Eigen::Index b = 0; b < B; ++b) {
            const S* src = dy.row(b).data();
            S* dst = dx.row(b).data();
            size_t o = size_t(b) * c_ * ho_ * wo_;
            for (int i = 0; i < c_ * ho_ * wo_; ++i) dst[argmax_[o + i]] += src[i];
        }
        return dx;
    }

    const char* kind() const override { return "MaxPool2"; }

private:
    int c_, h_, w_, ho_, wo_;
    Eigen::Index in_cols_ = 0;
    std::vector<int> argmax_;
};

// ---------------------------------------------------------------------------

/// Batch normalization over `channels` groups of `spatial` contiguous columns
/// (spatial = 1 gives the fully-connected variant). Training mode normalizes
/// with batch statistics and updates running estimates; eval mode uses the
/// running estimates.
template <class S>
class BatchNorm : public Layer<S> {
public:
    BatchNorm(int channels, int spatial = 1, double momentum = 0.1, double eps = 1e-5)
        : c_(channels), sp_(spatial), momentum_(S(momentum)), eps_(S(eps)) {
        gamma_ = Mat<S>::Ones(1, c_);
        beta_ = Mat<S>::Zero(1, c_);
        ggamma_ = Mat<S>::Zero(1, c_);
        gbeta_ = Mat<S>::Zero(1, c_);
        run_mean_ = Mat<S>::Zero(1, c_);
        run_var_ = Mat<S>::Ones(1, c_);
    }

    Mat<S> forward(const Mat<S>& x, Mode mode) override {
        require(x.cols() == Eigen::Index(c_) * sp_, "BatchNorm: input dim mismatch");
        const Eigen::Index B = x.rows();
        train_ = mode == Mode::train;
        if (train_) require(B >= 2 || sp_ > 1, "BatchNorm training needs batch size >= 2");
        Mat<S> y(B, x.cols());
        xhat_.resize(B, x.cols());
        invstd_.resize(1, c_);
        for (int c = 0; c < c_; ++c) {
            auto xb = x.middleCols(Eigen::Index(c) * sp_, sp_);
            S mean, var;
            if (train_) {
                const S n = S(B * sp_);
                mean = xb.sum() / n;
                var = xb.array().square().sum() / n - mean * mean;
                if (var < S(0)) var = S(0);
                run_mean_(0, c) = (S(1) - momentum_) * run_mean_(0, c) + momentum_ * mean;
                run_var_(0, c) = (S(1) - momentum_) * run_var_(0, c) + momentum_ * var;
            } else {
                mean = run_mean_(0, c);
                var = run_var_(0, c);
            }
            S inv = S(1) / std::sqrt(var + eps_);
            invstd_(0, c) = inv;
            xhat_.middleCols(Eigen::Index(c) * sp_, sp_) = (xb.array() - mean) * inv;
            y.middleCols(Eigen::Index(c) * sp_, sp_) =
                xhat_.middleCols(Eigen::Index(c) * sp_, sp_).array() * gamma_(0, c) + beta_(0, c);
        }
        return y;
    }

    Mat<S> backward(const Mat<S>& dy) override {
        const Eigen::Index B = dy.rows();
        Mat<S> dx(B, dy.cols());
        for (int c = 0; c < c_; ++c) {
            auto dyb = dy.middleCols(Eigen::Index(c) * sp_, sp_);
            auto xh = xhat_.middleCols(Eigen::Index(c) * sp_, sp_);
            S sum_dy = dyb.sum();
            S sum_dy_xhat = (dyb.array() * xh.array()).sum();
            ggamma_(0, c) += sum_dy_xhat;
            gbeta_(0, c) += sum_dy;
            if (train_) {
                const S n = S(B * sp_);
                dx.middleCols(Eigen::Index(c) * sp_, sp_) =
                    (gamma_(0, c) * invstd_(0, c) / n) *
                    (n * dyb.array() - sum_dy - xh.array() * sum_dy_xhat);
            } else {
                dx.middleCols(Eigen::Index(c) * sp_, sp_) =
                    dyb.array() * gamma_(0, c) * invstd_(0, c);
            }
        }
        return dx;
    }

    void collect_params(const std::string& p, std::vector<ParamRef<S>>& out) override {
        out.push_back({p + ".gamma", &gamma_, &ggamma_});
        out.push_back({p + ".beta", &beta_, &gbeta_});
    }

    void collect_buffers(const std::string& p, std::vector<BufferRef<S>>& out) override {
        out.push_back({p + ".run_mean", &run_mean_});
        out.push_back({p + ".run_var", &run_var_});
    }

    const char* kind() const override { return "BatchNorm"; }

private:
    int c_, sp_;
    S momentum_, eps_;
    bool train_ = true;
    Mat<S> gamma_, beta_, ggamma_, gbeta_, run_mean_, run_var_, xhat_, invstd_;
};

// ---------------------------------------------------------------------------

template <class S>
class ReLU : public Layer<S> {
public:
    Mat<S> forward(const Mat<S>& x, Mode) override {
        mask_ = (x.array() > S(0)).template cast<S>();
        return x.cwiseMax(S(0));
    }
    Mat<S> backward(const Mat<S>& dy) override { return dy.cwiseProduct(mask_); }
    const char* kind() const override { return "ReLU"; }

private:
    Mat<S> mask_;
};

template <class S>
class LeakyReLU : public Layer<S> {
public:
    explicit LeakyReLU(double slope = 0.01) : slope_(S(slope)) {}
    Mat<S> forward(const Mat<S>& x, Mode) override {
        scale_ = (x.array() > S(0)).select(Mat<S>::Ones(x.rows(), x.cols()),
                                           Mat<S>::Constant(x.rows(), x.cols(), slope_));
        return x.cwiseProduct(scale_);
    }
    Mat<S> backward(const Mat<S>& dy) override { return dy.cwiseProduct(scale_); }
    const char* kind() const override { return "LeakyReLU"; }

private:
    S slope_;
    Mat<S> scale_;
};

/// Inverted dropout: active only in training mode, draws its masks from the
/// model's RNG stream so runs are reproducible.
template <class S>
class Dropout : public Layer<S> {
public:
    Dropout(double p, Rng* rng) : p_(p), rng_(rng) { require(p >= 0 && p < 1, "dropout p in [0,1)"); }

    Mat<S> forward(const Mat<S>& x, Mode mode) override {
        if (mode == Mode::eval || p_ == 0.0) {
            active_ = false;
            return x;
        }
        active_ = true;
        mask_.resize(x.rows(), x.cols());
        const S keep = S(1.0 - p_);
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            for (Eigen::Index j = 0; j < x.cols(); ++j)
                mask_(i, j) = rng_->uniform() < p_ ? S(0) : S(1) / keep;
        return x.cwiseProduct(mask_);
    }

    Mat<S> backward(const Mat<S>& dy) override { return active_ ? dy.cwiseProduct(mask_).eval() : dy; }
    const char* kind() const override { return "Dropout"; }

private:
    double p_;
    Rng* rng_;
    bool active_ = false;
    Mat<S> mask_;
};

/// Row-wise softmax (numerically shifted).
template <class S>
class Softmax : public Layer<S> {
public:
    Mat<S> forward(const Mat<S>& x, Mode) override {
        Mat<S> y(x.rows(), x.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            S m = x.row(i).maxCoeff();
            y.row(i) = (x.row(i).array() - m).exp();
            y.row(i) /= y.row(i).sum();
        }
        y_ = y;
        return y;
    }

    Mat<S> backward(const Mat<S>& dy) override {
        Mat<S> dx(dy.rows(), dy.cols());
        for (Eigen::Index i = 0; i < dy.rows(); ++i) {
            S dot = dy.row(i).dot(y_.row(i));
            dx.row(i) = (dy.row(i).array() - dot) * y_.row(i).array();
        }
        return dx;
    }

    const char* kind() const override { return "Softmax"; }

private:
    Mat<S> y_;
};

// ---------------------------------------------------------------------------

/// Ordered layer stack with optional activation capture (used to read the
/// conv activations that feed the Gram statistics).
template <class S>
class Sequential {
public:
    Sequential() = default;
    Sequential(Sequential&&) noexcept = default;
    Sequential& operator=(Sequential&&) noexcept = default;

    template <class L, class... Args>
    L* add(Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L* raw = layer.get();
        layers_.push_back(std::move(layer));
        return raw;
    }

    Mat<S> forward(const Mat<S>& x, Mode mode) {
        Mat<S> h = x;
        for (auto& l : layers_) h = l->forward(h, mode);
        return h;
    }

    /// Forward that also copies the outputs of the layers at `capture_at`.
    Mat<S> forward_captured(const Mat<S>& x, Mode mode, const std::vector<int>& capture_at,
                            std::vector<Mat<S>>& captures) {
        captures.clear();
        Mat<S> h = x;
        for (size_t i = 0; i < layers_.size(); ++i) {
            h = layers_[i]->forward(h, mode);
            for (int c : capture_at)
                if (c == int(i)) captures.push_back(h);
        }
        return h;
    }

    Mat<S> backward(const Mat<S>& dy) {
        Mat<S> g = dy;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
        return g;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef<S>>& out) {
        for (size_t i = 0; i < layers_.size(); ++i)
            layers_[i]->collect_params(prefix + "." + std::to_string(i) + "." + layers_[i]->kind(), out);
    }

    void collect_buffers(const std::string& prefix, std::vector<BufferRef<S>>& out) {
        for (size_t i = 0; i < layers_.size(); ++i)
            layers_[i]->collect_buffers(prefix + "." + std::to_string(i) + "." + layers_[i]->kind(), out);
    }

    std::vector<ParamRef<S>> params(const std::string& prefix) {
        std::vector<ParamRef<S>> out;
        collect_params(prefix, out);
        return out;
    }

    size_t num_layers() const { return layers_.size(); }
    Layer<S>* layer(size_t i) { return layers_[i].get(); }

private:
    std::vector<std::unique_ptr<Layer<S>>> layers_;
};

template <class S>
int64_t parameter_count(const std::vector<ParamRef<S>>& params) {
    int64_t n = 0;
    for (const auto& p : params) n += p.value->size();
    return n;
}

template <class S>
void zero_grads(const std::vector<ParamRef<S>>& params) {
    for (const auto& p : params) p.grad->setZero();
}

} // namespace d2v::nn
