#pragma once

#include <vector>

#include "d2v/losses/losses.hpp"
#include "d2v/nn/layers.hpp"
#include "d2v/nn/optim.hpp"

namespace d2v::eval {

/// Multinomial logistic probe on frozen features: trains a fresh linear map
/// with full-batch Adam and reports held-out accuracy. Used to measure how
/// much domain/class information survives in a representation.
template <class S>
double linear_probe_accuracy(const nn::Mat<S>& train_x, const std::vector<int>& train_y,
                             const nn::Mat<S>& test_x, const std::vector<int>& test_y,
                             int num_targets, uint64_t seed, int iters = 300, double lr = 0.05) {
    require(train_x.rows() == Eigen::Index(train_y.size()), "probe: train size mismatch");
    require(test_x.rows() == Eigen::Index(test_y.size()), "probe: test size mismatch");
    require(num_targets >= 2, "probe needs at least two target values");
    const Eigen::Index d = train_x.cols();

    // standardize features on the training split
    Eigen::RowVectorXd mean = train_x.template cast<double>().colwise().mean();
    Eigen::RowVectorXd sd =
        ((train_x.template cast<double>().rowwise() - mean).array().square().colwise().sum() /
         double(train_x.rows()))
            .sqrt()
            .matrix();
    for (Eigen::Index j = 0; j < d; ++j) sd[j] = std::max(sd[j], 1e-8);

    auto standardize = [&](const nn::Mat<S>& x) {
        nn::Mat<double> out = x.template cast<double>();
        out.rowwise() -= mean;
        out.array().rowwise() /= sd.array();
        return out;
    };
    nn::Mat<double> xt = standardize(train_x);
    nn::Mat<double> xe = standardize(test_x);

    Rng rng = Rng::derive(seed, 0x9120BEull);
    nn::Mat<double> w(num_targets, d);
    nn::he_uniform_init(w, int(d), rng);
    nn::Mat<double> b = nn::Mat<double>::Zero(1, num_targets);
    nn::Mat<double> gw = nn::Mat<double>::Zero(num_targets, d);
    nn::Mat<double> gb = nn::Mat<double>::Zero(1, num_targets);
    nn::Optimizer<double> opt({{"w", &w, &gw}, {"b", &b, &gb}}, nn::OptimKind::adam, lr);

    const Eigen::Index n = xt.rows();
    for (int it = 0; it < iters; ++it) {
        nn::Mat<double> logits = (xt * w.transpose()).rowwise() + b.row(0);
        nn::Mat<double> probs(n, num_targets);
        for (Eigen::Index i = 0; i < n; ++i) {
            double m = logits.row(i).maxCoeff();
            probs.row(i) = (logits.row(i).array() - m).exp();
            probs.row(i) /= probs.row(i).sum();
        }
        nn::Mat<double> dlogits = probs / double(n);
        for (Eigen::Index i = 0; i < n; ++i) dlogits(i, train_y[i]) -= 1.0 / double(n);
        opt.zero_grad();
        gw.noalias() += dlogits.transpose() * xt;
        gb.row(0) += dlogits.colwise().sum();
        opt.step();
    }

    int correct = 0;
    nn::Mat<double> logits = (xe * w.transpose()).rowwise() + b.row(0);
    for (Eigen::Index i = 0; i < xe.rows(); ++i) {
        Eigen::Index arg;
        logits.row(i).maxCoeff(&arg);
        correct += int(arg) == test_y[i];
    }
    return double(correct) / double(xe.rows());
}

} // namespace d2v::eval
