#pragma once

#include <cmath>
#include <vector>

#include "d2v/core/error.hpp"

namespace d2v::eval {

/// Pearson correlation coefficient. Zero variance in either argument is an
/// undefined correlation and raises a numeric error.
inline double pearson_cc(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size(), "pearson_cc: length mismatch");
    require(x.size() >= 2, "pearson_cc needs at least two points");
    const double n = double(x.size());
    double mx = 0, my = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0 || syy <= 0) throw NumericError("pearson_cc: zero variance, correlation undefined");
    double rho = sxy / (std::sqrt(sxx) * std::sqrt(syy));
    return std::min(1.0, std::max(-1.0, rho));
}

} // namespace d2v::eval
