#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "d2v/nn/layers.hpp"

namespace d2v::nn {

enum class OptimKind { sgd, adam };

inline OptimKind optim_kind_from_string(const std::string& s) {
    if (s == "sgd") return OptimKind::sgd;
    if (s == "adam") return OptimKind::adam;
    throw PreconditionError("unknown optimizer: " + s);
}

/// Adam / SGD-with-momentum over a fixed set of parameter refs. Each model
/// component gets its own instance, which is what lets the trainer step
/// components selectively (adversarial freezing).
template <class S>
class Optimizer {
public:
    Optimizer() = default;

    Optimizer(std::vector<ParamRef<S>> params, OptimKind kind, double lr, double momentum = 0.9,
              double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), kind_(kind), lr_(S(lr)), momentum_(S(momentum)),
          beta1_(S(beta1)), beta2_(S(beta2)), eps_(S(eps)) {
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (const auto& p : params_) {
            m_.push_back(Mat<S>::Zero(p.value->rows(), p.value->cols()));
            v_.push_back(Mat<S>::Zero(p.value->rows(), p.value->cols()));
        }
    }

    void zero_grad() {
        for (const auto& p : params_) p.grad->setZero();
    }

    void step() {
        ++t_;
        if (kind_ == OptimKind::adam) {
            const S bc1 = S(1) - std::pow(beta1_, S(t_));
            const S bc2 = S(1) - std::pow(beta2_, S(t_));
            for (size_t i = 0; i < params_.size(); ++i) {
                auto& g = *params_[i].grad;
                m_[i] = beta1_ * m_[i] + (S(1) - beta1_) * g;
                v_[i] = beta2_ * v_[i] + (S(1) - beta2_) * g.cwiseProduct(g);
                params_[i].value->array() -=
                    lr_ * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + eps_);
            }
        } else {
            for (size_t i = 0; i < params_.size(); ++i) {
                m_[i] = momentum_ * m_[i] + *params_[i].grad;
                *params_[i].value -= lr_ * m_[i];
            }
        }
    }

    /// Gradient ascent step (used for the MINE statistic network).
    void step_ascend() {
        lr_ = -lr_;
        step();
        lr_ = -lr_;
    }

    const std::vector<ParamRef<S>>& params() const { return params_; }
    int64_t steps_taken() const { return t_; }
    void set_lr(double lr) { lr_ = S(lr); }

    /// Optimizer slots, exposed for checkpointing (resume => same trajectory).
    std::vector<BufferRef<S>> state_buffers(const std::string& prefix) {
        std::vector<BufferRef<S>> out;
        for (size_t i = 0; i < params_.size(); ++i) {
            out.push_back({prefix + "." + params_[i].name + ".m", &m_[i]});
            out.push_back({prefix + "." + params_[i].name + ".v", &v_[i]});
        }
        return out;
    }

    int64_t t_ = 0;

private:
    std::vector<ParamRef<S>> params_;
    OptimKind kind_ = OptimKind::adam;
    S lr_ = S(1e-4), momentum_ = S(0.9), beta1_ = S(0.9), beta2_ = S(0.999), eps_ = S(1e-8);
    std::vector<Mat<S>> m_, v_;
};

} // namespace d2v::nn
