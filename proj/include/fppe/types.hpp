#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace fppe {

template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Item-major storage: one row per item, one column per buyer.
template <typename Scalar>
using ItemMatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Vector = VectorT<double>;
using Matrix = MatrixT<double>;
using ItemMatrix = ItemMatrixT<double>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    double width() const { return hi - lo; }
    bool contains(double x) const { return lo <= x && x <= hi; }
};

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed market definition or generator spec.
class InvalidSpecError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t row, const std::string& what)
        : Error("row " + std::to_string(row) + ": " + what), row_(row) {}

    std::size_t row() const { return row_; }

private:
    std::size_t row_;
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what, double condition = 0.0)
        : Error(what), condition_(condition) {}

    /// Condition estimate of the offending matrix, when one applies.
    double condition() const { return condition_; }

private:
    double condition_;
};

class ConvergenceError : public NumericalError {
public:
    ConvergenceError(const std::string& what, Vector best_beta, double residual)
        : NumericalError(what), best_beta_(std::move(best_beta)), residual_(residual) {}

    const Vector& best_beta() const { return best_beta_; }
    double residual() const { return residual_; }

private:
    Vector best_beta_;
    double residual_;
};

class CalibrationError : public NumericalError {
public:
    CalibrationError(const std::string& what, double fraction_low, double fraction_high)
        : NumericalError(what), fraction_low_(fraction_low), fraction_high_(fraction_high) {}

    /// Paced fraction reached at the smallest / largest budget scale probed.
    double fraction_low() const { return fraction_low_; }
    double fraction_high() const { return fraction_high_; }

private:
    double fraction_low_;
    double fraction_high_;
};

}  // namespace fppe
