#pragma once

#include <stdexcept>
#include <string>

namespace d2v {

/// Violated caller contract (bad shapes, empty inputs, invalid config).
/// CLI maps this to exit code 2.
class PreconditionError : public std::invalid_argument {
public:
    explicit PreconditionError(const std::string& what) : std::invalid_argument(what) {}
};

/// Numeric breakdown mid-computation (NaN/Inf in a loss, degenerate variance).
/// CLI maps this to exit code 3.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem failure, always carries the offending path.
class IoError : public std::runtime_error {
public:
    IoError(const std::string& what, const std::string& path)
        : std::runtime_error(what + ": " + path), path(path) {}
    std::string path;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw PreconditionError(what);
}

} // namespace d2v
