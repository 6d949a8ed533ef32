#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace nnpsf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inconsistent sizes between objects that must agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Malformed input data (files, configuration, non-finite numbers).
class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// A numerical routine did not reach its accuracy target.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Plant matrices x+ = A x + B u (+ learned residual).
struct LinearPlant {
    Matrix A;
    Matrix B;

    [[nodiscard]] int nx() const { return static_cast<int>(A.rows()); }
    [[nodiscard]] int nu() const { return static_cast<int>(B.cols()); }
};

inline Vector stack(const Vector& x, const Vector& u)
{
    Vector z(x.size() + u.size());
    z << x, u;
    return z;
}

} // namespace nnpsf
