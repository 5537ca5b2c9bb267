#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace dkf {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Thrown when a matrix that must be positive definite cannot be factorized.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown on inconsistent shapes or out-of-contract configuration.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline std::string shape_of(const Mat& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline Mat symmetrize(const Mat& m) {
    return 0.5 * (m + m.transpose());
}

/// Eigenvalues of the symmetric part, ascending.
inline Vec sym_eigenvalues(const Mat& m) {
    if (m.size() == 0) {
        return Vec{};
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

inline double lambda_min(const Mat& m) {
    const Vec ev = sym_eigenvalues(m);
    return ev.size() == 0 ? std::numeric_limits<double>::infinity() : ev(0);
}

inline double lambda_max(const Mat& m) {
    const Vec ev = sym_eigenvalues(m);
    return ev.size() == 0 ? -std::numeric_limits<double>::infinity() : ev(ev.size() - 1);
}

inline bool is_symmetric(const Mat& m, double tol = 0.0) {
    return m.rows() == m.cols() && (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

inline Mat block_diag(const Mat& a, const Mat& b) {
    Mat out = Mat::Zero(a.rows() + b.rows(), a.cols() + b.cols());
    out.topLeftCorner(a.rows(), a.cols()) = a;
    out.bottomRightCorner(b.rows(), b.cols()) = b;
    return out;
}

/// Inverse of a symmetric positive definite matrix through a Cholesky factor.
/// On failure a single jitter of 1e-10 * tr(M)/dim is added before giving up.
inline Mat spd_inverse(const Mat& m, const std::string& what = "matrix") {
    const auto n = m.rows();
    if (n != m.cols()) {
        throw ValidationError(what + ": not square (" + shape_of(m) + ")");
    }
    if (n == 0) {
        return Mat(0, 0);
    }
    Mat s = symmetrize(m);
    Eigen::LLT<Mat> llt(s);
    if (llt.info() != Eigen::Success) {
        const double jitter = 1e-10 * std::abs(s.trace()) / static_cast<double>(n);
        s.diagonal().array() += jitter;
        llt.compute(s);
        if (llt.info() != Eigen::Success || !(jitter > 0.0)) {
            throw NumericalError(what + ": not positive definite");
        }
    }
    Mat inv = llt.solve(Mat::Identity(n, n));
    if (!inv.allFinite()) {
        throw NumericalError(what + ": inverse is not finite");
    }
    return symmetrize(inv);
}

/// Inverse of a general square matrix; throws when numerically singular.
inline Mat checked_inverse(const Mat& m, const std::string& what = "matrix") {
    if (m.rows() != m.cols()) {
        throw ValidationError(what + ": not square (" + shape_of(m) + ")");
    }
    if (m.size() == 0) {
        return Mat(0, 0);
    }
    Eigen::FullPivLU<Mat> lu(m);
    if (!lu.isInvertible()) {
        throw NumericalError(what + ": singular");
    }
    return lu.inverse();
}

}  // namespace dkf
