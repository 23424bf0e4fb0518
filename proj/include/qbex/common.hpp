#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace qbex {

using Eigen::MatrixXd;
using Eigen::VectorXd;

using Index = std::size_t;
using IndexList = std::vector<Index>;

/// Raised for malformed or inconsistent input data (bad files, dimension
/// mismatches, out-of-range indices). The CLI maps it to exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a caller violates a documented precondition on a parameter
/// (tau out of range, k > N, and so on).
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ParameterError(what);
}

inline void require_data(bool cond, const std::string& what) {
    if (!cond) throw DataError(what);
}

inline bool all_finite(const MatrixXd& m) { return m.allFinite(); }

}  // namespace qbex
