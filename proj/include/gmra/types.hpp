#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace gmra {

/// Row-major sample matrix: point i is row i.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
/// Column-major matrix for bases (orthonormal columns).
using Basis = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = std::size_t;

constexpr Index kNone = std::numeric_limits<Index>::max();

/// Malformed input: bad files, dimension mismatches, precondition violations on data.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical invariant broke (e.g. the orthogonal refinement identity went negative).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid parameters passed to an API (CLI maps these to usage errors).
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace gmra
