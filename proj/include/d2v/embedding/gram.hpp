#pragma once

#include <Eigen/Dense>
#include <vector>

#include "d2v/core/error.hpp"

namespace d2v::embed {

/// The retained band of an example-averaged Gram matrix of one conv layer:
/// main diagonal (n), superdiagonal and subdiagonal (n-1 each, equal by
/// symmetry of G = F F^T).
struct GramDiagonals {
    Eigen::VectorXd main;   // G[c,c]
    Eigen::VectorXd upper;  // G[c,c+1] == G[c+1,c]

    int channels() const { return int(main.size()); }

    /// Flattened [main, super, sub] block of length 3n-2.
    Eigen::VectorXd flatten() const {
        Eigen::VectorXd v(3 * main.size() - 2);
        v << main, upper, upper;
        return v;
    }
};

/// Tri-diagonal band of G_ij = sum_k F_ik F_jk where F is the C x (H*W)
/// vectorised feature map, given as one flattened CHW row.
template <class Row>
GramDiagonals gram_tridiagonal(const Row& activation_row, int channels, int spatial) {
    require(channels >= 1 && spatial >= 1, "gram_tridiagonal: bad shape");
    require(activation_row.size() == Eigen::Index(channels) * spatial,
            "gram_tridiagonal: row length != channels * spatial");
    GramDiagonals g;
    g.main.resize(channels);
    g.upper.resize(std::max(0, channels - 1));
    for (int c = 0; c < channels; ++c) {
        double acc = 0;
        for (int k = 0; k < spatial; ++k) {
            double v = double(activation_row[c * spatial + k]);
            acc += v * v;
        }
        g.main[c] = acc;
        if (c + 1 < channels) {
            double accu = 0;
            for (int k = 0; k < spatial; ++k)
                accu += double(activation_row[c * spatial + k]) *
                        double(activation_row[(c + 1) * spatial + k]);
            g.upper[c] = accu;
        }
    }
    return g;
}

/// Streaming mean of per-example Gram diagonals (averaging the diagonals is
/// the same as taking diagonals of the averaged Gram matrix).
struct GramAccumulator {
    GramDiagonals sum;
    int64_t count = 0;

    void add(const GramDiagonals& g) {
        if (count == 0) {
            sum = g;
        } else {
            require(g.channels() == sum.channels(), "gram accumulator channel mismatch");
            sum.main += g.main;
            sum.upper += g.upper;
        }
        ++count;
    }

    GramDiagonals mean() const {
        require(count > 0, "gram accumulator is empty");
        GramDiagonals m = sum;
        m.main /= double(count);
        m.upper /= double(count);
        return m;
    }
};

} // namespace d2v::embed
