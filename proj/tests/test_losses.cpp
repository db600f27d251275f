#include <catch2/catch_amalgamated.hpp>

#include "d2v/core/rng.hpp"
#include "d2v/losses/losses.hpp"

using namespace d2v;
using namespace d2v::losses;
using M = nn::Mat<double>;

namespace {

M random_probs(Rng& rng, int b, int k) {
    M m(b, k);
    for (int i = 0; i < b; ++i) {
        double sum = 0;
        for (int j = 0; j < k; ++j) {
            m(i, j) = std::exp(rng.normal());
            sum += m(i, j);
        }
        m.row(i) /= sum;
    }
    return m;
}

} // namespace

TEST_CASE("cross entropy: one-hot correct prediction gives zero") {
    M p = M::Zero(3, 4);
    std::vector<int> y{1, 0, 3};
    for (int i = 0; i < 3; ++i) p(i, y[i]) = 1.0;
    CHECK_THAT(cross_entropy(p, y), Catch::Matchers::WithinAbs(0.0, 1e-15));
}

TEST_CASE("cross entropy: uniform prediction gives log K") {
    M p = M::Constant(5, 10, 0.1);
    std::vector<int> y{0, 3, 9, 2, 7};
    CHECK_THAT(ce_class(p, y), Catch::Matchers::WithinAbs(std::log(10.0), 1e-12));
    M pn = M::Constant(4, 54, 1.0 / 54);
    std::vector<int> yd{0, 53, 10, 20};
    CHECK_THAT(ce_domain(pn, yd), Catch::Matchers::WithinAbs(std::log(54.0), 1e-12));
    CHECK_THAT(ce_domain(pn, yd), Catch::Matchers::WithinAbs(3.988984, 1e-6));
}

TEST_CASE("cross entropy matches a scalar loop oracle") {
    Rng rng(1);
    M p = random_probs(rng, 17, 6);
    std::vector<int> y;
    for (int i = 0; i < 17; ++i) y.push_back(rng.randint(6));
    double oracle = 0;
    for (int i = 0; i < 17; ++i) oracle += -std::log(p(i, y[i]));
    oracle /= 17;
    CHECK_THAT(cross_entropy(p, y), Catch::Matchers::WithinAbs(oracle, 1e-6));
}

TEST_CASE("cross entropy clamps zero probability at the true label and flags it") {
    M p = M::Zero(1, 3);
    p(0, 1) = 1.0;
    std::vector<int> y{0};
    bool clamped = false;
    double v = cross_entropy(p, y, &clamped);
    CHECK(clamped);
    CHECK_THAT(v, Catch::Matchers::WithinAbs(-std::log(kProbEps), 1e-9));
    CHECK(std::isfinite(v));
}

TEST_CASE("cross entropy rejects bad labels and empty batches") {
    M p = M::Constant(2, 3, 1.0 / 3);
    CHECK_THROWS_AS(cross_entropy(p, std::vector<int>{0, 3}), PreconditionError);
    CHECK_THROWS_AS(cross_entropy(M(0, 3), std::vector<int>{}), PreconditionError);
}

TEST_CASE("negative entropy: uniform rows attain -log N") {
    M p = M::Constant(7, 54, 1.0 / 54);
    CHECK_THAT(ent_class(p), Catch::Matchers::WithinAbs(-std::log(54.0), 1e-12));
    CHECK_THAT(ent_class(p), Catch::Matchers::WithinAbs(-3.988984, 1e-6));
    M pk = M::Constant(3, 10, 0.1);
    CHECK_THAT(ent_domain(pk), Catch::Matchers::WithinAbs(-std::log(10.0), 1e-12));
}

TEST_CASE("negative entropy: one-hot rows give zero (p log p -> 0 convention)") {
    M p = M::Zero(4, 6);
    for (int i = 0; i < 4; ++i) p(i, i) = 1.0;
    CHECK_THAT(neg_entropy(p), Catch::Matchers::WithinAbs(0.0, 1e-15));
}

TEST_CASE("negative entropy matches a loop oracle and stays in [-log N, 0]") {
    Rng rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        M p = random_probs(rng, 9, 8);
        double oracle = 0;
        for (int i = 0; i < 9; ++i)
            for (int k = 0; k < 8; ++k)
                if (p(i, k) > 0) oracle += p(i, k) * std::log(p(i, k));
        oracle /= 9;
        double v = neg_entropy(p);
        CHECK_THAT(v, Catch::Matchers::WithinAbs(oracle, 1e-6));
        CHECK(v <= 1e-12);
        CHECK(v >= -std::log(8.0) - 1e-12);
    }
}

TEST_CASE("rec_kl: perfect reconstruction and zero means give (0, 0)") {
    Rng rng(3);
    M f(2, 16);
    for (int i = 0; i < f.size(); ++i) f(i / 16, i % 16) = rng.normal();
    M z24 = M::Zero(2, 4);
    auto [rec, kl] = rec_kl(f, f, z24);
    CHECK(rec == 0.0);
    CHECK(kl == 0.0);
}

TEST_CASE("rec_kl analytic cases") {
    // single row, all-ones difference, 8192 features -> rec = 8192
    M f = M::Zero(1, 8192), fh = M::Ones(1, 8192);
    M z14 = M::Zero(1, 4);
    auto [rec, kl] = rec_kl(f, fh, z14);
    CHECK_THAT(rec, Catch::Matchers::WithinAbs(8192.0, 1e-9));
    CHECK(kl == 0.0);

    // mu = (3,4) -> kl = (9+16)/2 = 12.5
    M mu = M::Zero(1, 5);
    mu(0, 0) = 3.0;
    mu(0, 1) = 4.0;
    auto [rec2, kl2] = rec_kl(f, f, mu);
    CHECK(rec2 == 0.0);
    CHECK_THAT(kl2, Catch::Matchers::WithinAbs(12.5, 1e-12));
}

TEST_CASE("mine_mi identities") {
    M zeros = M::Zero(8, 1);
    CHECK_THAT(mine_mi(zeros, zeros), Catch::Matchers::WithinAbs(0.0, 1e-15));

    // joint = marginal = c  =>  c - log(e^c) = 0 for any c
    for (double c : {-3.0, 0.5, 42.0, 1000.0}) {
        M t = M::Constant(6, 1, c);
        CHECK_THAT(mine_mi(t, t), Catch::Matchers::WithinAbs(0.0, 1e-9));
    }
}

TEST_CASE("mine_mi is invariant to adding a constant to all statistic values") {
    Rng rng(4);
    M tj(10, 1), tm(10, 1);
    for (int i = 0; i < 10; ++i) {
        tj(i, 0) = rng.normal();
        tm(i, 0) = rng.normal();
    }
    double base = mine_mi(tj, tm);
    for (double c : {-7.0, 0.3, 500.0}) {
        M tjc = tj.array() + c, tmc = tm.array() + c;
        CHECK_THAT(mine_mi(tjc, tmc), Catch::Matchers::WithinAbs(base, 1e-9));
    }
}

TEST_CASE("mine_mi never overflows to Inf") {
    M big = M::Constant(4, 1, 5000.0);
    M small = M::Constant(4, 1, -5000.0);
    CHECK(std::isfinite(mine_mi(big, big)));
    CHECK(std::isfinite(mine_mi(small, big)));
    CHECK(std::isfinite(mine_mi(big, small)));
}

TEST_CASE("total loss composition") {
    LossWeights w;
    w.w1 = w.w2 = w.w3 = w.w4 = 1.0;
    w.alpha = 1.0;
    // all components zero -> zero
    CHECK(total_loss(0, 0, 0, 0, 0, 0, 0, w).total == 0.0);
    // all components one -> 2 + 2 + 2 + 1 = 7
    CHECK_THAT(total_loss(1, 1, 1, 1, 1, 1, 1, w).total, Catch::Matchers::WithinAbs(7.0, 1e-12));

    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        LossWeights wr;
        wr.w1 = rng.uniform();
        wr.w2 = rng.uniform();
        wr.w3 = rng.uniform();
        wr.w4 = rng.uniform();
        wr.alpha = rng.uniform();
        double c1 = rng.normal(), e1 = rng.normal(), c2 = rng.normal(), e2 = rng.normal();
        double r = rng.normal(), k = rng.normal(), m = rng.normal();
        LossBreakdown b = total_loss(c1, e1, c2, e2, r, k, m, wr);
        double oracle = wr.w1 * (c1 + wr.alpha * e1) + wr.w2 * (c2 + wr.alpha * e2) +
                        wr.w3 * (r + k) + wr.w4 * m;
        CHECK_THAT(b.total, Catch::Matchers::WithinAbs(oracle, 1e-9));
    }
}

TEST_CASE("negative weights are rejected") {
    LossWeights w;
    w.w3 = -0.1;
    CHECK_THROWS_AS(w.validate(), PreconditionError);
}

// ---------------------------------------------------------------------------
// Finite-difference checks of every loss gradient

TEST_CASE("cross entropy gradient matches finite differences") {
    Rng rng(6);
    M p = random_probs(rng, 5, 7);
    std::vector<int> y;
    for (int i = 0; i < 5; ++i) y.push_back(rng.randint(7));
    M g = cross_entropy_grad(p, y);
    const double h = 1e-7;
    for (int trial = 0; trial < 20; ++trial) {
        int i = rng.randint(5), j = rng.randint(7);
        M pp = p, pm = p;
        pp(i, j) += h;
        pm(i, j) -= h;
        double fd = (cross_entropy(pp, y) - cross_entropy(pm, y)) / (2 * h);
        CHECK(std::abs(fd - g(i, j)) < 1e-3 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("negative entropy gradient matches finite differences") {
    Rng rng(7);
    M p = random_probs(rng, 4, 6);
    M g = neg_entropy_grad(p);
    const double h = 1e-7;
    for (int trial = 0; trial < 20; ++trial) {
        int i = rng.randint(4), j = rng.randint(6);
        M pp = p, pm = p;
        pp(i, j) += h;
        pm(i, j) -= h;
        double fd = (neg_entropy(pp) - neg_entropy(pm)) / (2 * h);
        CHECK(std::abs(fd - g(i, j)) < 1e-3 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("rec and kl gradients match finite differences") {
    Rng rng(8);
    M f(3, 10), fh(3, 10), mu(3, 4);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 10; ++j) {
            f(i, j) = rng.normal();
            fh(i, j) = rng.normal();
        }
        for (int j = 0; j < 4; ++j) mu(i, j) = rng.normal();
    }
    M grec = rec_grad_wrt_recon(f, fh);
    M gkl = kl_grad_wrt_means(mu);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        int i = rng.randint(3), j = rng.randint(10);
        M fp = fh, fm = fh;
        fp(i, j) += h;
        fm(i, j) -= h;
        double fd = (rec_kl(f, fp, mu).first - rec_kl(f, fm, mu).first) / (2 * h);
        CHECK(std::abs(fd - grec(i, j)) < 1e-6 * std::max(1.0, std::abs(fd)));

        int jm = rng.randint(4);
        M mp = mu, mm = mu;
        mp(i, jm) += h;
        mm(i, jm) -= h;
        double fdk = (rec_kl(f, fh, mp).second - rec_kl(f, fh, mm).second) / (2 * h);
        CHECK(std::abs(fdk - gkl(i, jm)) < 1e-6 * std::max(1.0, std::abs(fdk)));
    }
}

TEST_CASE("mine_mi gradients match finite differences") {
    Rng rng(9);
    M tj(8, 1), tm(8, 1);
    for (int i = 0; i < 8; ++i) {
        tj(i, 0) = rng.normal();
        tm(i, 0) = rng.normal();
    }
    auto [dj, dm] = mine_mi_grad(tj, tm);
    const double h = 1e-6;
    for (int i = 0; i < 8; ++i) {
        M tp = tj, tmm = tj;
        tp(i, 0) += h;
        tmm(i, 0) -= h;
        double fd = (mine_mi(tp, tm) - mine_mi(tmm, tm)) / (2 * h);
        CHECK(std::abs(fd - dj(i, 0)) < 1e-6 * std::max(1.0, std::abs(fd)));

        M mp = tm, mm2 = tm;
        mp(i, 0) += h;
        mm2(i, 0) -= h;
        double fdm = (mine_mi(tj, mp) - mine_mi(tj, mm2)) / (2 * h);
        CHECK(std::abs(fdm - dm(i, 0)) < 1e-5 * std::max(1.0, std::abs(fdm)));
    }
}
