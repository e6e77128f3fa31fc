#pragma once

#include <stdexcept>

#include "linalg.hpp"

namespace stochinv {

/// Mean and covariance of a (possibly degenerate) multivariate Gaussian.
template <int N>
class GaussianBelief {
public:
    GaussianBelief(const Vec<N>& mean, const SymMat<N>& cov) : mean_(mean), cov_(cov) {
        require_finite(mean_, "GaussianBelief mean");
        if ((cov_.diag().array() < 0.0).any()) {
            throw std::invalid_argument("GaussianBelief: negative variance on the diagonal");
        }
    }

    const Vec<N>& mean() const { return mean_; }
    const SymMat<N>& cov() const { return cov_; }

private:
    Vec<N> mean_;
    SymMat<N> cov_;
};

/// Second raw moment E[X X^T] = cov + mean mean^T.
template <int N>
SymMat<N> corr_from_cov(const GaussianBelief<N>& b) {
    return SymMat<N>(b.cov().matrix() + b.mean() * b.mean().transpose());
}

/// Inverse of corr_from_cov.
template <int N>
SymMat<N> cov_from_corr(const SymMat<N>& corr, const Vec<N>& mean) {
    return SymMat<N>(corr.matrix() - mean * mean.transpose());
}

/// E[G^T M G] = tr(M corr[G]). Dimension agreement is enforced at compile time.
template <int N>
double expect_quadratic_form(const SymMat<N>& m, const SymMat<N>& corr) {
    return (m.matrix() * corr.matrix()).trace();
}

/// E[X_i X_j X_k] for a Gaussian, via Isserlis:
/// mu_i mu_j mu_k + mu_i S_jk + mu_j S_ik + mu_k S_ij.
/// Repeated indices are allowed (e.g. E[X_1^2 X_3]).
template <int N>
double gaussian_third_moment(int i, int j, int k, const GaussianBelief<N>& b) {
    if (i < 0 || j < 0 || k < 0 || i >= N || j >= N || k >= N) {
        throw std::out_of_range("gaussian_third_moment: index out of range");
    }
    const auto& mu = b.mean();
    const auto& s = b.cov();
    return mu(i) * mu(j) * mu(k) + mu(i) * s(j, k) + mu(j) * s(i, k) + mu(k) * s(i, j);
}

}  // namespace stochinv
