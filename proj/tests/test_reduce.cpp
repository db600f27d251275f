#include <catch2/catch_amalgamated.hpp>

#include "d2v/core/rng.hpp"
#include "d2v/embedding/reduce.hpp"

using namespace d2v;
using namespace d2v::embed;

TEST_CASE("pca preserves pairwise distances for data already in a low-dim subspace") {
    Rng rng(1);
    const int n = 10, sub = 3, d = 24;
    // points in a 3-dim subspace of R^24
    Eigen::MatrixXd basis(sub, d);
    for (int i = 0; i < sub; ++i)
        for (int j = 0; j < d; ++j) basis(i, j) = rng.normal();
    Eigen::MatrixXd coords(n, sub);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < sub; ++j) coords(i, j) = rng.normal();
    Eigen::MatrixXd x = coords * basis;

    Eigen::MatrixXd y = pca_project(x, sub);
    REQUIRE(y.cols() == sub);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double dx = (x.row(i) - x.row(j)).norm();
            double dy = (y.row(i) - y.row(j)).norm();
            CHECK(std::abs(dx - dy) < 1e-5 * std::max(1.0, dx));
        }
}

TEST_CASE("pca clamps the target dimension when N is small") {
    Rng rng(2);
    Eigen::MatrixXd x(3, 50);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 50; ++j) x(i, j) = rng.normal();
    Eigen::MatrixXd y = pca_project(x, 30);
    CHECK(y.cols() == 2);  // min(N-1, d)
}

TEST_CASE("reduce_dims rejects fewer than two rows") {
    Eigen::MatrixXd x(1, 5);
    x.setZero();
    CHECK_THROWS_AS(reduce_dims(x, 3, 2, 0), PreconditionError);
}

TEST_CASE("duplicate input rows remain mutually closest after reduction") {
    Rng rng(3);
    const int n = 12, d = 16;
    Eigen::MatrixXd x(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x(i, j) = rng.normal(0.0, 3.0);
    // rows 4 and 9 are duplicates
    x.row(9) = x.row(4);

    Eigen::MatrixXd y = reduce_dims(x, 8, 2, 77);
    REQUIRE(y.rows() == n);
    REQUIRE(y.cols() == 2);

    auto nearest = [&](int i) {
        int best = -1;
        double bd = 1e300;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            double dj = (y.row(i) - y.row(j)).norm();
            if (dj < bd) {
                bd = dj;
                best = j;
            }
        }
        return best;
    };
    CHECK(nearest(4) == 9);
    CHECK(nearest(9) == 4);
}

TEST_CASE("reduction is reproducible for a fixed seed") {
    Rng rng(4);
    Eigen::MatrixXd x(9, 20);
    for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 20; ++j) x(i, j) = rng.normal();
    Eigen::MatrixXd a = reduce_dims(x, 5, 2, 123);
    Eigen::MatrixXd b = reduce_dims(x, 5, 2, 123);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    Eigen::MatrixXd c = reduce_dims(x, 5, 2, 124);
    CHECK((a - c).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("well-separated clusters stay separated through the full reduction") {
    Rng rng(5);
    const int per = 6;
    Eigen::MatrixXd x(2 * per, 30);
    for (int i = 0; i < 2 * per; ++i) {
        double center = i < per ? -20.0 : 20.0;
        for (int j = 0; j < 30; ++j) x(i, j) = center + rng.normal();
    }
    Eigen::MatrixXd y = reduce_dims(x, 10, 2, 9);
    // every point sits nearer its own cluster centroid than the other one
    Eigen::RowVector2d ca = y.topRows(per).colwise().mean();
    Eigen::RowVector2d cb = y.bottomRows(per).colwise().mean();
    for (int i = 0; i < 2 * per; ++i) {
        double da = (y.row(i) - ca).norm();
        double db = (y.row(i) - cb).norm();
        if (i < per)
            CHECK(da < db);
        else
            CHECK(db < da);
    }
}
