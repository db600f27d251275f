#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "d2v/core/error.hpp"
#include "d2v/nn/layers.hpp"

namespace d2v::losses {

using nn::Mat;

/// Probabilities are clamped here before entering a log.
constexpr double kProbEps = 1e-12;

/// Weights of the overall objective:
/// total = w1*(ce_class + a*ent_class) + w2*(ce_domain + a*ent_domain)
///       + w3*(rec + kl) + w4*mi.
struct LossWeights {
    double w1 = 1.0, w2 = 1.0, w3 = 0.1, w4 = 0.1;
    double alpha = 0.1;

    void validate() const {
        require(w1 >= 0 && w2 >= 0 && w3 >= 0 && w4 >= 0 && alpha >= 0,
                "loss weights must be non-negative");
    }

    nlohmann::json to_json() const {
        return {{"w1", w1}, {"w2", w2}, {"w3", w3}, {"w4", w4}, {"alpha", alpha}};
    }
    static LossWeights from_json(const nlohmann::json& j) {
        LossWeights w;
        w.w1 = j.value("w1", 1.0);
        w.w2 = j.value("w2", 1.0);
        w.w3 = j.value("w3", 0.1);
        w.w4 = j.value("w4", 0.1);
        w.alpha = j.value("alpha", 0.1);
        w.validate();
        return w;
    }
};

struct LossBreakdown {
    double ce_class = 0, ent_class = 0, ce_domain = 0, ent_domain = 0;
    double rec = 0, kl = 0, mi = 0;
    double total = 0;

    void compose(const LossWeights& w) {
        total = w.w1 * (ce_class + w.alpha * ent_class) + w.w2 * (ce_domain + w.alpha * ent_domain) +
                w.w3 * (rec + kl) + w.w4 * mi;
    }

    /// Name of the first non-finite component, or nullptr when all are finite.
    const char* first_non_finite() const {
        auto bad = [](double v) { return !std::isfinite(v); };
        if (bad(ce_class)) return "ce_class";
        if (bad(ent_class)) return "ent_class";
        if (bad(ce_domain)) return "ce_domain";
        if (bad(ent_domain)) return "ent_domain";
        if (bad(rec)) return "rec";
        if (bad(kl)) return "kl";
        if (bad(mi)) return "mi";
        if (bad(total)) return "total";
        return nullptr;
    }

    nlohmann::json to_json() const {
        return {{"ce_class", ce_class}, {"ent_class", ent_class}, {"ce_domain", ce_domain},
                {"ent_domain", ent_domain}, {"rec", rec}, {"kl", kl}, {"mi", mi}, {"total", total}};
    }

    LossBreakdown& accumulate(const LossBreakdown& o, double scale = 1.0) {
        ce_class += scale * o.ce_class;
        ent_class += scale * o.ent_class;
        ce_domain += scale * o.ce_domain;
        ent_domain += scale * o.ent_domain;
        rec += scale * o.rec;
        kl += scale * o.kl;
        mi += scale * o.mi;
        total += scale * o.total;
        return *this;
    }
};

// ---------------------------------------------------------------------------
// Cross entropy (batch mean of -log p[label])

template <class S>
double cross_entropy(const Mat<S>& probs, const std::vector<int>& labels, bool* clamped = nullptr) {
    require(probs.rows() == Eigen::Index(labels.size()), "cross_entropy: batch size mismatch");
    require(probs.rows() > 0, "cross_entropy: empty batch");
    double acc = 0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        require(labels[i] >= 0 && labels[i] < probs.cols(), "cross_entropy: label out of range");
        double p = double(probs(i, labels[i]));
        if (p < kProbEps) {
            p = kProbEps;
            if (clamped) *clamped = true;
        }
        acc -= std::log(p);
    }
    return acc / double(probs.rows());
}

/// d(cross_entropy)/d(probs).
template <class S>
Mat<S> cross_entropy_grad(const Mat<S>& probs, const std::vector<int>& labels) {
    Mat<S> g = Mat<S>::Zero(probs.rows(), probs.cols());
    const double inv_b = 1.0 / double(probs.rows());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        double p = std::max(double(probs(i, labels[i])), kProbEps);
        g(i, labels[i]) = S(-inv_b / p);
    }
    return g;
}

// Spec-facing aliases: Eq. 1 on C(f_cs), Eq. 3 on DC(f_ds).
template <class S>
double ce_class(const Mat<S>& class_probs, const std::vector<int>& labels, bool* clamped = nullptr) {
    return cross_entropy(class_probs, labels, clamped);
}
template <class S>
double ce_domain(const Mat<S>& domain_probs, const std::vector<int>& labels, bool* clamped = nullptr) {
    return cross_entropy(domain_probs, labels, clamped);
}

// ---------------------------------------------------------------------------
// Negative entropy (batch mean of sum_k p log p); minimized at uniform rows,
// where it equals -log(num_columns). Zero rows-entries use the p log p -> 0
// convention.

template <class S>
double neg_entropy(const Mat<S>& probs) {
    require(probs.rows() > 0, "neg_entropy: empty batch");
    double acc = 0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i)
        for (Eigen::Index k = 0; k < probs.cols(); ++k) {
            double p = double(probs(i, k));
            if (p > 0) acc += p * std::log(p);
        }
    return acc / double(probs.rows());
}

template <class S>
Mat<S> neg_entropy_grad(const Mat<S>& probs) {
    Mat<S> g(probs.rows(), probs.cols());
    const double inv_b = 1.0 / double(probs.rows());
    for (Eigen::Index i = 0; i < probs.rows(); ++i)
        for (Eigen::Index k = 0; k < probs.cols(); ++k) {
            double p = std::max(double(probs(i, k)), kProbEps);
            g(i, k) = S((std::log(p) + 1.0) * inv_b);
        }
    return g;
}

// Spec-facing aliases: Eq. 2 on DC(f_cs), Eq. 4 on C(f_ds).
template <class S>
double ent_class(const Mat<S>& domain_probs_of_fcs) {
    return neg_entropy(domain_probs_of_fcs);
}
template <class S>
double ent_domain(const Mat<S>& class_probs_of_fds) {
    return neg_entropy(class_probs_of_fds);
}

// ---------------------------------------------------------------------------
// Reconstruction + KL (Eq. 5). rec is the squared Frobenius error per batch
// row; kl treats the latent rows as means of unit-variance Gaussians against
// a standard normal prior, giving ||mu||^2 / 2 per row.

template <class S>
std::pair<double, double> rec_kl(const Mat<S>& f_g, const Mat<S>& f_g_hat, const Mat<S>& latent_means) {
    require(f_g.rows() == f_g_hat.rows() && f_g.cols() == f_g_hat.cols(),
            "rec_kl: feature shape mismatch");
    require(latent_means.rows() == f_g.rows(), "rec_kl: latent batch mismatch");
    const double inv_b = 1.0 / double(f_g.rows());
    double rec = (f_g_hat - f_g).squaredNorm() * inv_b;
    double kl = 0.5 * latent_means.squaredNorm() * inv_b;
    return {rec, kl};
}

template <class S>
Mat<S> rec_grad_wrt_recon(const Mat<S>& f_g, const Mat<S>& f_g_hat) {
    return S(2.0 / double(f_g.rows())) * (f_g_hat - f_g);
}

template <class S>
Mat<S> kl_grad_wrt_means(const Mat<S>& latent_means) {
    return latent_means / S(double(latent_means.rows()));
}

// ---------------------------------------------------------------------------
// MINE Monte-Carlo estimate (Eq. 7):
//   I = (1/n) sum_i T(p_i, q_i) - log((1/n) sum_i exp(T(p_i, q'_i)))
// The log-mean-exp is max-shifted and can never overflow to Inf.

template <class S>
double mine_mi(const Mat<S>& t_joint, const Mat<S>& t_marginal) {
    require(t_joint.cols() == 1 && t_marginal.cols() == 1, "mine_mi expects column vectors");
    require(t_joint.rows() == t_marginal.rows(), "mine_mi: sample count mismatch");
    require(t_joint.rows() >= 2, "mine_mi needs at least two samples");
    const Eigen::Index n = t_joint.rows();
    double joint_mean = double(t_joint.sum()) / double(n);
    double m = double(t_marginal.maxCoeff());
    double acc = 0;
    for (Eigen::Index i = 0; i < n; ++i) acc += std::exp(double(t_marginal(i, 0)) - m);
    double lme = m + std::log(acc / double(n));
    return joint_mean - lme;
}

/// Gradients w.r.t. the two statistic-value vectors.
template <class S>
std::pair<Mat<S>, Mat<S>> mine_mi_grad(const Mat<S>& t_joint, const Mat<S>& t_marginal) {
    const Eigen::Index n = t_joint.rows();
    Mat<S> dj = Mat<S>::Constant(n, 1, S(1.0 / double(n)));
    double m = double(t_marginal.maxCoeff());
    Mat<S> dm(n, 1);
    double z = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        dm(i, 0) = S(std::exp(double(t_marginal(i, 0)) - m));
        z += double(dm(i, 0));
    }
    dm /= S(-z);
    return {dj, dm};
}

// ---------------------------------------------------------------------------

/// Eq. 9: combines already-computed components into a breakdown whose total
/// satisfies the composition identity.
inline LossBreakdown total_loss(double ce_class_v, double ent_class_v, double ce_domain_v,
                                double ent_domain_v, double rec_v, double kl_v, double mi_v,
                                const LossWeights& w) {
    w.validate();
    LossBreakdown b;
    b.ce_class = ce_class_v;
    b.ent_class = ent_class_v;
    b.ce_domain = ce_domain_v;
    b.ent_domain = ent_domain_v;
    b.rec = rec_v;
    b.kl = kl_v;
    b.mi = mi_v;
    b.compose(w);
    return b;
}

} // namespace d2v::losses
