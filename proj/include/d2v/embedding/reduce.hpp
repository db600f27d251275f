#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>

#include "d2v/core/error.hpp"
#include "d2v/core/rng.hpp"

namespace d2v::embed {

/// PCA projection of row-vectors onto the top `dim` principal components
/// (centered; dim is clamped to min(N-1, d)).
inline Eigen::MatrixXd pca_project(const Eigen::MatrixXd& x, int dim) {
    const int n = int(x.rows());
    require(n >= 2, "pca needs at least two rows");
    dim = std::min({dim, n - 1, int(x.cols())});
    require(dim >= 1, "pca target dimension must be positive");
    Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return centered * svd.matrixV().leftCols(dim);
}

/// Exact symmetric t-SNE for small N. Seeded and single-threaded, so results
/// are reproducible bit-for-bit.
inline Eigen::MatrixXd sne_embed(const Eigen::MatrixXd& x, int out_dim, double perplexity,
                                 uint64_t seed, int iters = 500) {
    const int n = int(x.rows());
    require(n >= 2, "sne needs at least two rows");
    require(out_dim >= 1, "sne output dimension must be positive");
    perplexity = std::max(perplexity, 0.01);

    // pairwise squared distances
    Eigen::MatrixXd d2(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) d2(i, j) = (x.row(i) - x.row(j)).squaredNorm();

    // per-point precision by binary search on the conditional entropy
    const double target_h = std::log(perplexity);
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
        for (int it = 0; it < 64; ++it) {
            double sum = 0, hsum = 0;
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                double pj = std::exp(-beta * d2(i, j));
                sum += pj;
                hsum += beta * d2(i, j) * pj;
            }
            double h = sum > 0 ? std::log(sum) + hsum / sum : 0.0;
            if (std::abs(h - target_h) < 1e-7) break;
            if (h > target_h) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2 : (beta + hi) / 2;
            } else {
                hi = beta;
                beta = (beta + lo) / 2;
            }
        }
        double sum = 0;
        for (int j = 0; j < n; ++j)
            if (j != i) sum += std::exp(-beta * d2(i, j));
        for (int j = 0; j < n; ++j)
            if (j != i) p(i, j) = sum > 0 ? std::exp(-beta * d2(i, j)) / sum : 1.0 / (n - 1);
    }
    // symmetrize
    p = (p + p.transpose()) / (2.0 * n);
    p = p.cwiseMax(1e-12);

    Rng rng = Rng::derive(seed, 0x5BEu);
    Eigen::MatrixXd y(n, out_dim);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < out_dim; ++j) y(i, j) = rng.normal(0.0, 1e-4);

    Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(n, out_dim);
    const double lr = 10.0;
    for (int iter = 0; iter < iters; ++iter) {
        const double exaggeration = iter < 100 ? 4.0 : 1.0;
        const double momentum = iter < 250 ? 0.5 : 0.8;

        Eigen::MatrixXd num(n, n);
        double qsum = 0;
        for (int i = 0; i < n; ++i) {
            num(i, i) = 0;
            for (int j = i + 1; j < n; ++j) {
                double v = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
                num(i, j) = v;
                num(j, i) = v;
                qsum += 2 * v;
            }
        }
        qsum = std::max(qsum, 1e-12);

        Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, out_dim);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                double q = std::max(num(i, j) / qsum, 1e-12);
                double coeff = 4.0 * (exaggeration * p(i, j) - q) * num(i, j);
                grad.row(i) += coeff * (y.row(i) - y.row(j));
            }
        velocity = momentum * velocity - lr * grad;
        y += velocity;
        y.rowwise() -= y.colwise().mean();  // keep centered
    }
    return y;
}

/// PCA to `pca_dim`, then stochastic neighbor embedding to `final_dim`.
/// Desk-scale perplexity rule: min(5, (N-1)/3).
inline Eigen::MatrixXd reduce_dims(const Eigen::MatrixXd& embeddings, int pca_dim, int final_dim,
                                   uint64_t seed) {
    const int n = int(embeddings.rows());
    require(n >= 2, "reduce_dims needs at least two embeddings");
    Eigen::MatrixXd scores = pca_project(embeddings, pca_dim);
    double perplexity = std::min(5.0, double(n - 1) / 3.0);
    return sne_embed(scores, final_dim, perplexity, seed);
}

} // namespace d2v::embed
