#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <utility>

#include "errors.hpp"

namespace stochinv {

template <int N>
using Vec = Eigen::Matrix<double, N, 1>;

/// General square matrix. Used where symmetry does not hold (drift Jacobians).
template <int N>
using Mat = Eigen::Matrix<double, N, N>;

using Vec3 = Vec<3>;
using Vec6 = Vec<6>;
using Mat3 = Mat<3>;
using Mat6 = Mat<6>;

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
    return m.allFinite();
}

inline bool all_finite(double x) { return std::isfinite(x); }

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
    if (!m.allFinite()) {
        throw std::invalid_argument(std::string(what) + ": non-finite entry");
    }
}

/// Symmetric N x N matrix. Symmetry is exact: the stored matrix always equals
/// its transpose bit for bit.
template <int N>
class SymMat {
public:
    static constexpr int order = N;

    SymMat() : m_(Mat<N>::Zero()) {}

    /// Symmetrizes (M + M^T)/2. Floating-point addition commutes, so the
    /// result is exactly symmetric.
    explicit SymMat(const Mat<N>& m) : m_(0.5 * (m + m.transpose())) {
        require_finite(m_, "SymMat");
    }

    /// Accepts only matrices that are already symmetric to within `tol`.
    static SymMat from_symmetric(const Mat<N>& m, double tol = 0.0) {
        double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
        if (!(asym <= tol)) {
            throw std::invalid_argument("SymMat: input is not symmetric");
        }
        return SymMat(m);
    }

    static SymMat diagonal(const Vec<N>& d) {
        Mat<N> m = Mat<N>::Zero();
        m.diagonal() = d;
        return SymMat(m);
    }

    static SymMat identity() { return SymMat(Mat<N>::Identity()); }

    static SymMat scaled_identity(double p) { return SymMat(p * Mat<N>::Identity()); }

    /// v v^T; the product v_i v_j is commutative so no symmetrization error.
    static SymMat outer(const Vec<N>& v) { return SymMat(v * v.transpose()); }

    double operator()(int i, int j) const { return m_(i, j); }
    const Mat<N>& matrix() const { return m_; }
    Vec<N> diag() const { return m_.diagonal(); }
    double trace() const { return m_.trace(); }

    bool is_diagonal() const {
        for (int i = 0; i < N; ++i) {
            for (int j = 0; j < N; ++j) {
                if (i != j && m_(i, j) != 0.0) return false;
            }
        }
        return true;
    }

    double max_asymmetry() const { return (m_ - m_.transpose()).cwiseAbs().maxCoeff(); }

    friend SymMat operator+(const SymMat& a, const SymMat& b) { return SymMat(a.m_ + b.m_); }
    friend SymMat operator-(const SymMat& a, const SymMat& b) { return SymMat(a.m_ - b.m_); }
    friend SymMat operator*(double s, const SymMat& a) { return SymMat(s * a.m_); }

private:
    Mat<N> m_;
};

using SymMat3 = SymMat<3>;
using SymMat6 = SymMat<6>;

/// Extreme eigenvalues of a symmetric matrix.
struct EigBounds {
    double min;
    double max;
};

template <int N>
EigBounds sym_eig_bounds(const SymMat<N>& q) {
    Eigen::SelfAdjointEigenSolver<Mat<N>> solver(q.matrix(), Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("sym_eig_bounds: eigenvalue iteration did not converge");
    }
    const auto& ev = solver.eigenvalues();  // ascending
    return {ev(0), ev(N - 1)};
}

/// Rejects asymmetric input instead of silently symmetrizing it.
template <int N>
EigBounds sym_eig_bounds(const Mat<N>& q) {
    return sym_eig_bounds(SymMat<N>::from_symmetric(q));
}

/// Symmetric square root factor L with L L^T = S, valid for singular PSD S.
template <int N>
Mat<N> psd_factor(const SymMat<N>& s) {
    Eigen::SelfAdjointEigenSolver<Mat<N>> solver(s.matrix());
    Vec<N> root = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return solver.eigenvectors() * root.asDiagonal();
}

}  // namespace stochinv
