#include <catch2/catch_amalgamated.hpp>

#include "d2v/nn/layers.hpp"
#include "d2v/nn/optim.hpp"

using namespace d2v;
using namespace d2v::nn;

using M = Mat<double>;

namespace {

M random_mat(Rng& rng, int r, int c, double sd = 1.0) {
    M m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = rng.normal(0.0, sd);
    return m;
}

// Scalar probe loss: sum(R .* layer(X)). Checks input and parameter
// gradients of `layer` against central differences.
void check_layer_gradients(Layer<double>& layer, M x, Rng& rng, double tol = 1e-5) {
    std::vector<ParamRef<double>> params;
    layer.collect_params("p", params);

    M y0 = layer.forward(x, Mode::train);
    M probe = random_mat(rng, int(y0.rows()), int(y0.cols()));

    auto loss = [&](const M& xin) { return (layer.forward(xin, Mode::train).array() * probe.array()).sum(); };

    zero_grads(params);
    layer.forward(x, Mode::train);
    M dx = layer.backward(probe);

    const double h = 1e-6;
    // input gradient at sampled coordinates
    for (int trial = 0; trial < 12; ++trial) {
        int i = rng.randint(int(x.rows())), j = rng.randint(int(x.cols()));
        M xp = x, xm = x;
        xp(i, j) += h;
        xm(i, j) -= h;
        double fd = (loss(xp) - loss(xm)) / (2 * h);
        CHECK(std::abs(fd - dx(i, j)) < tol * std::max({1.0, std::abs(fd), std::abs(dx(i, j))}));
    }
    // parameter gradients (recompute analytic after the FD forwards clobbered caches)
    zero_grads(params);
    layer.forward(x, Mode::train);
    layer.backward(probe);
    for (const auto& p : params) {
        for (int trial = 0; trial < 8; ++trial) {
            int i = rng.randint(int(p.value->rows()));
            int j = rng.randint(int(p.value->cols()));
            double orig = (*p.value)(i, j);
            (*p.value)(i, j) = orig + h;
            double fp = loss(x);
            (*p.value)(i, j) = orig - h;
            double fm = loss(x);
            (*p.value)(i, j) = orig;
            double fd = (fp - fm) / (2 * h);
            double an = (*p.grad)(i, j);
            CHECK(std::abs(fd - an) < tol * std::max({1.0, std::abs(fd), std::abs(an)}));
        }
    }
}

} // namespace

TEST_CASE("Linear forward matches explicit affine map and gradients check out") {
    Rng rng(1);
    Linear<double> lin(7, 5, rng);
    M x = random_mat(rng, 4, 7);
    M y = lin.forward(x, Mode::train);
    REQUIRE(y.rows() == 4);
    REQUIRE(y.cols() == 5);
    check_layer_gradients(lin, x, rng);
}

TEST_CASE("Conv2d shapes and gradients") {
    Rng rng(2);
    Conv2d<double> conv(2, 3, 6, 6, 5, 1, 2, rng);
    CHECK(conv.out_h() == 6);
    CHECK(conv.out_w() == 6);
    M x = random_mat(rng, 3, 2 * 6 * 6);
    M y = conv.forward(x, Mode::train);
    REQUIRE(y.cols() == 3 * 6 * 6);
    check_layer_gradients(conv, x, rng);
}

TEST_CASE("Conv2d matches a direct nested-loop convolution") {
    Rng rng(3);
    const int cin = 2, cout = 2, hw = 4, k = 3, pad = 1;
    Conv2d<double> conv(cin, cout, hw, hw, k, 1, pad, rng);
    std::vector<ParamRef<double>> params;
    conv.collect_params("c", params);
    const M& W = *params[0].value;  // cout x (cin*k*k)
    const M& b = *params[1].value;

    M x = random_mat(rng, 1, cin * hw * hw);
    M y = conv.forward(x, Mode::train);

    for (int co = 0; co < cout; ++co)
        for (int oy = 0; oy < hw; ++oy)
            for (int ox = 0; ox < hw; ++ox) {
                double acc = b(0, co);
                for (int ci = 0; ci < cin; ++ci)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            int iy = oy - pad + ky, ix = ox - pad + kx;
                            if (iy < 0 || iy >= hw || ix < 0 || ix >= hw) continue;
                            acc += W(co, (ci * k + ky) * k + kx) * x(0, (ci * hw + iy) * hw + ix);
                        }
                CHECK_THAT(y(0, (co * hw + oy) * hw + ox), Catch::Matchers::WithinAbs(acc, 1e-12));
            }
}

TEST_CASE("MaxPool2 picks maxima and routes gradients") {
    Rng rng(4);
    MaxPool2<double> pool(2, 4, 4);
    M x = random_mat(rng, 2, 2 * 4 * 4);
    M y = pool.forward(x, Mode::train);
    REQUIRE(y.cols() == 2 * 2 * 2);
    check_layer_gradients(pool, x, rng);
}

TEST_CASE("BatchNorm normalizes batch statistics in training mode") {
    Rng rng(5);
    BatchNorm<double> bn(3, 4);
    M x = random_mat(rng, 8, 12, 2.5);
    x.array() += 1.0;
    M y = bn.forward(x, Mode::train);
    for (int c = 0; c < 3; ++c) {
        auto blk = y.middleCols(c * 4, 4);
        double mean = blk.sum() / 32.0;
        double var = blk.array().square().sum() / 32.0 - mean * mean;
        CHECK_THAT(mean, Catch::Matchers::WithinAbs(0.0, 1e-12));
        CHECK_THAT(var, Catch::Matchers::WithinAbs(1.0, 1e-4));
    }
    check_layer_gradients(bn, x, rng, 1e-5);
}

TEST_CASE("BatchNorm eval mode uses running statistics") {
    Rng rng(6);
    BatchNorm<double> bn(2, 1);
    M x = random_mat(rng, 16, 2);
    for (int i = 0; i < 50; ++i) bn.forward(x, Mode::train);
    M y1 = bn.forward(x, Mode::eval);
    M y2 = bn.forward(x, Mode::eval);
    CHECK((y1 - y2).cwiseAbs().maxCoeff() == 0.0);  // eval is pure
    // after long exposure to one batch, running stats approach batch stats
    M yt = bn.forward(x, Mode::train);
    CHECK((y1 - yt).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("ReLU and LeakyReLU gradients") {
    Rng rng(7);
    ReLU<double> relu;
    M x = random_mat(rng, 5, 9);
    check_layer_gradients(relu, x, rng);
    LeakyReLU<double> leaky(0.01);
    check_layer_gradients(leaky, random_mat(rng, 5, 9), rng);
}

TEST_CASE("Softmax rows sum to one and gradients check out") {
    Rng rng(8);
    Softmax<double> sm;
    M x = random_mat(rng, 6, 10, 3.0);
    M y = sm.forward(x, Mode::train);
    for (int i = 0; i < 6; ++i) CHECK_THAT(y.row(i).sum(), Catch::Matchers::WithinAbs(1.0, 1e-12));
    check_layer_gradients(sm, x, rng);
}

TEST_CASE("Dropout is identity in eval mode and unbiased in train mode") {
    Rng rng(9);
    Rng drop_rng(10);
    Dropout<double> drop(0.5, &drop_rng);
    M x = M::Ones(50, 40);
    CHECK((drop.forward(x, Mode::eval) - x).cwiseAbs().maxCoeff() == 0.0);
    M y = drop.forward(x, Mode::train);
    double mean = y.sum() / double(y.size());
    CHECK(std::abs(mean - 1.0) < 0.1);
    // mask values are 0 or 1/keep
    for (int i = 0; i < 10; ++i) {
        double v = y(rng.randint(50), rng.randint(40));
        CHECK((v == 0.0 || std::abs(v - 2.0) < 1e-12));
    }
}

TEST_CASE("composite conv stack end-to-end gradient check") {
    Rng rng(11);
    Sequential<double> net;
    net.add<Conv2d<double>>(1, 2, 8, 8, 5, 1, 2, rng);
    net.add<BatchNorm<double>>(2, 64);
    net.add<ReLU<double>>();
    net.add<MaxPool2<double>>(2, 8, 8);
    net.add<Linear<double>>(2 * 4 * 4, 6, rng);
    net.add<Softmax<double>>();

    M x = random_mat(rng, 3, 64);
    M y0 = net.forward(x, Mode::train);
    M probe = random_mat(rng, 3, 6);

    auto params = net.params("net");
    zero_grads(params);
    net.forward(x, Mode::train);
    M dx = net.backward(probe);

    const double h = 1e-6;
    auto loss = [&] { return (net.forward(x, Mode::train).array() * probe.array()).sum(); };
    for (int trial = 0; trial < 25; ++trial) {
        const auto& p = params[rng.randint(int(params.size()))];
        int i = rng.randint(int(p.value->rows()));
        int j = rng.randint(int(p.value->cols()));
        double orig = (*p.value)(i, j);
        (*p.value)(i, j) = orig + h;
        double fp = loss();
        (*p.value)(i, j) = orig - h;
        double fm = loss();
        (*p.value)(i, j) = orig;
        double fd = (fp - fm) / (2 * h);
        double an = (*p.grad)(i, j);
        CHECK(std::abs(fd - an) < 1e-5 * std::max({1.0, std::abs(fd), std::abs(an)}));
    }
}

TEST_CASE("Adam minimizes a quadratic") {
    Rng rng(13);
    Mat<double> w = random_mat(rng, 1, 4);
    Mat<double> g(1, 4);
    Optimizer<double> opt({{"w", &w, &g}}, OptimKind::adam, 0.05);
    for (int it = 0; it < 400; ++it) {
        g = 2.0 * w;  // d/dw ||w||^2
        opt.step();
    }
    CHECK(w.cwiseAbs().maxCoeff() < 1e-3);

    // zero gradient => zero movement even with accumulated state
    Mat<double> before = w;
    g.setZero();
    Mat<double> w2 = random_mat(rng, 1, 4);
    Mat<double> g2 = Mat<double>::Zero(1, 4);
    Optimizer<double> opt2({{"w", &w2, &g2}}, OptimKind::adam, 0.05);
    Mat<double> before2 = w2;
    for (int it = 0; it < 10; ++it) opt2.step();
    CHECK((w2 - before2).cwiseAbs().maxCoeff() == 0.0);
}
