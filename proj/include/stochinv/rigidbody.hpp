#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "errors.hpp"
#include "gaussian.hpp"
#include "linalg.hpp"
#include "rk4.hpp"
#include "sde.hpp"

namespace stochinv::rigidbody {

/// Principal moments of inertia J = diag(J1, J2, J3), kg m^2.
class InertiaModel {
public:
    explicit InertiaModel(const Vec3& principal) : j_(principal) {
        require_finite(j_, "InertiaModel");
        if ((j_.array() <= 0.0).any()) {
            throw std::invalid_argument("InertiaModel: principal moments must be positive");
        }
    }

    const Vec3& principal() const { return j_; }
    Mat3 matrix() const { return j_.asDiagonal(); }
    Mat3 inverse() const { return j_.cwiseInverse().asDiagonal(); }

    /// Euler coefficients c1 = (J2-J3)/J1, c2 = (J3-J1)/J2, c3 = (J1-J2)/J3.
    Vec3 coefficients() const {
        return {(j_(1) - j_(2)) / j_(0), (j_(2) - j_(0)) / j_(1), (j_(0) - j_(1)) / j_(2)};
    }

    /// J_i + J_j >= J_k for every permutation; physical bodies satisfy it.
    bool satisfies_triangle_inequality() const {
        return j_(0) + j_(1) >= j_(2) && j_(1) + j_(2) >= j_(0) && j_(0) + j_(2) >= j_(1);
    }

private:
    Vec3 j_;
};

/// Torque-free Euler equations in principal axes: (c1 w2 w3, c2 w1 w3, c3 w1 w2).
inline Vec3 euler_drift(const Vec3& w, const InertiaModel& inertia) {
    Vec3 c = inertia.coefficients();
    return {c(0) * (w(1) * w(2)), c(1) * (w(0) * w(2)), c(2) * (w(0) * w(1))};
}

/// Same field written as -J^{-1} (w x J w).
inline Vec3 euler_drift_cross_form(const Vec3& w, const InertiaModel& inertia) {
    Vec3 jw = inertia.principal().cwiseProduct(w);
    return -(w.cross(jw)).cwiseQuotient(inertia.principal());
}

/// Jacobian of euler_drift evaluated at mu.
inline Mat3 drift_jacobian(const Vec3& mu, const InertiaModel& inertia) {
    Vec3 c = inertia.coefficients();
    Mat3 a;
    a << 0.0, c(0) * mu(2), c(0) * mu(1),
         c(1) * mu(2), 0.0, c(1) * mu(0),
         c(2) * mu(1), c(2) * mu(0), 0.0;
    return a;
}

struct KineticEnergy {
    double value;
    Vec3 gradient;       // J w
    Mat3 hessian_half;   // J / 2
};

inline KineticEnergy kinetic_energy(const Vec3& w, const InertiaModel& inertia) {
    Vec3 jw = inertia.principal().cwiseProduct(w);
    return {0.5 * w.dot(jw), jw, 0.5 * inertia.matrix()};
}

/// Angular momentum norm squared |J w|^2, the second torque-free invariant.
inline double angular_momentum_sq(const Vec3& w, const InertiaModel& inertia) {
    return inertia.principal().cwiseProduct(w).squaredNorm();
}

/// Rigid body driven by white-noise torque: dw = f(w) dt + J^{-1} dB,
/// dB ~ N(0, Q dt) with Q the torque intensity (N^2 m^2 s).
class RigidBodyModel {
public:
    static constexpr int state_dim = 3;
    static constexpr int noise_dim = 3;

    RigidBodyModel(InertiaModel inertia, SymMat3 q) : inertia_(std::move(inertia)), q_(q) {
        if (!q_.is_diagonal() || (q_.diag().array() < 0.0).any()) {
            throw std::invalid_argument(
                "RigidBodyModel: torque noise covariance must be diagonal and nonnegative");
        }
    }

    Vec3 drift(double, const Vec3& w) const { return euler_drift(w, inertia_); }
    Mat3 diffusion(double, const Vec3&) const { return inertia_.inverse(); }
    const SymMat3& noise_cov() const { return q_; }
    const InertiaModel& inertia() const { return inertia_; }

private:
    InertiaModel inertia_;
    SymMat3 q_;
};

/// Coupled moment state: angular-velocity mean/covariance and the first two
/// moments of kinetic energy.
struct RigidBodyMoments {
    Vec3 mean = Vec3::Zero();  // rad/s
    SymMat3 cov;               // rad^2/s^2
    double ke_mean = 0.0;      // E[U_K], J
    double ke_corr = 0.0;      // E[U_K^2], J^2
    double ke_cov = 0.0;       // var[U_K], J^2

    GaussianBelief<3> belief() const { return {mean, cov}; }

    /// Exact kinetic-energy moments of a Gaussian angular velocity:
    /// E[U] = tr(J S)/2 + mu^T J mu/2,  var[U] = tr((J S)^2)/2 + mu^T J S J mu.
    static RigidBodyMoments from_belief(const GaussianBelief<3>& b, const InertiaModel& inertia) {
        RigidBodyMoments m;
        m.mean = b.mean();
        m.cov = b.cov();
        Mat3 j = inertia.matrix();
        Mat3 js = j * b.cov().matrix();
        Vec3 jmu = j * b.mean();
        m.ke_mean = 0.5 * js.trace() + 0.5 * b.mean().dot(jmu);
        m.ke_cov = 0.5 * (js * js).trace() + jmu.dot(b.cov().matrix() * jmu);
        m.ke_corr = m.ke_cov + m.ke_mean * m.ke_mean;
        return m;
    }
};

/// sigma = [(J2-J3) S23, (J3-J1) S31, (J1-J2) S12].
inline Vec3 sigma_vector(const SymMat3& s, const InertiaModel& inertia) {
    const Vec3& j = inertia.principal();
    return {(j(1) - j(2)) * s(1, 2), (j(2) - j(0)) * s(2, 0), (j(0) - j(1)) * s(0, 1)};
}

/// d/dt E[w] under Gaussian closure, vector form -J^{-1}(mu x J mu) + J^{-1} sigma.
inline Vec3 mean_rate_vector_form(const RigidBodyMoments& m, const InertiaModel& inertia) {
    return euler_drift_cross_form(m.mean, inertia) +
           sigma_vector(m.cov, inertia).cwiseQuotient(inertia.principal());
}

/// d/dt E[w], scalar form: mu_dot_1 = c1 (S23 + mu2 mu3), and cyclic.
/// Cross-checked against the vector form.
inline Vec3 mean_rate(const RigidBodyMoments& m, const InertiaModel& inertia) {
    Vec3 c = inertia.coefficients();
    const Vec3& mu = m.mean;
    const SymMat3& s = m.cov;
    Vec3 scalar{c(0) * (s(1, 2) + mu(1) * mu(2)), c(1) * (s(2, 0) + mu(0) * mu(2)),
                c(2) * (s(0, 1) + mu(0) * mu(1))};
    Vec3 vector = mean_rate_vector_form(m, inertia);
    double scale = std::max(1.0, scalar.cwiseAbs().maxCoeff());
    if ((scalar - vector).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw NumericalError("mean_rate: scalar and vector forms disagree");
    }
    return scalar;
}

/// Third raw moments E[w_i * w_a * w_b] arranged so that
/// E[w f(w)^T] = third_moment_matrix * diag(c), where {a, b} are the two
/// indices other than the column index.
inline Mat3 third_moment_matrix(const GaussianBelief<3>& b) {
    Mat3 m;
    for (int i = 0; i < 3; ++i) {
        for (int col = 0; col < 3; ++col) {
            int a = (col + 1) % 3;
            int c = (col + 2) % 3;
            m(i, col) = gaussian_third_moment(i, a, c, b);
        }
    }
    return m;
}

/// Tolerance on the two covariance-rate routes agreeing.
inline constexpr double kCovRateConsistencyTol = 1e-10;

struct CovRateRoutes {
    SymMat3 compact;    // A S + S A^T + J^{-1} Q J^{-1}
    SymMat3 via_corr;   // R_dot - mu_dot mu^T - mu mu_dot^T
    double mismatch;    // max abs entry difference
};

/// Covariance rate computed twice: the linearized Lyapunov form and the
/// raw-correlation route through Gaussian third moments.
inline CovRateRoutes cov_rate_routes(const RigidBodyMoments& m, const InertiaModel& inertia,
                                     const SymMat3& q) {
    Mat3 jinv = inertia.inverse();
    Mat3 forcing = jinv * q.matrix() * jinv;

    Mat3 a = drift_jacobian(m.mean, inertia);
    Mat3 compact = a * m.cov.matrix() + m.cov.matrix() * a.transpose() + forcing;

    Mat3 e_w_f = third_moment_matrix(m.belief()) * inertia.coefficients().asDiagonal();
    Mat3 corr_rate = e_w_f + e_w_f.transpose() + forcing;
    Vec3 mu_dot = mean_rate(m, inertia);
    Mat3 outer = mu_dot * m.mean.transpose();
    Mat3 via_corr = corr_rate - outer - outer.transpose();

    double mismatch = (compact - via_corr).cwiseAbs().maxCoeff();
    return {SymMat3(compact), SymMat3(via_corr), mismatch};
}

inline SymMat3 cov_rate(const RigidBodyMoments& m, const InertiaModel& inertia, const SymMat3& q) {
    if (!q.is_diagonal()) throw std::invalid_argument("cov_rate: Q must be diagonal");
    auto routes = cov_rate_routes(m, inertia, q);
    double scale = std::max(1.0, routes.compact.matrix().cwiseAbs().maxCoeff());
    if (!(routes.mismatch <= kCovRateConsistencyTol * scale)) {
        throw NumericalError("cov_rate: compact and third-moment routes disagree by " +
                             std::to_string(routes.mismatch));
    }
    return routes.compact;
}

/// d/dt E[U_K] = tr(J^{-1} Q) / 2, independent of the state.
inline double ke_mean_rate(const InertiaModel& inertia, const SymMat3& q) {
    return 0.5 * q.diag().cwiseQuotient(inertia.principal()).sum();
}

/// d/dt E[U_K^2] = E[U_K] tr(J^{-1} Q) + tr((S + mu mu^T) Q).
inline double ke_corr_rate(const RigidBodyMoments& m, const InertiaModel& inertia,
                           const SymMat3& q) {
    double tr_jinv_q = q.diag().cwiseQuotient(inertia.principal()).sum();
    return m.ke_mean * tr_jinv_q + expect_quadratic_form(q, corr_from_cov(m.belief()));
}

/// The alternative with tr(J Q) in place of tr(J^{-1} Q). Kept only so the
/// Monte Carlo oracle can rule between the two.
inline double ke_corr_rate_jq_variant(const RigidBodyMoments& m, const InertiaModel& inertia,
                                      const SymMat3& q) {
    double tr_jq = q.diag().cwiseProduct(inertia.principal()).sum();
    return m.ke_mean * tr_jq + expect_quadratic_form(q, corr_from_cov(m.belief()));
}

/// d/dt var[U_K] = tr((S + mu mu^T) Q). Nonnegative for PSD corr and Q >= 0.
inline double ke_cov_rate(const RigidBodyMoments& m, const SymMat3& q) {
    return expect_quadratic_form(q, corr_from_cov(m.belief()));
}

/// Packed 12-vector for the integrator: mu(3), S11 S22 S33 S12 S13 S23, ke_mean, ke_corr, ke_cov.
using PackedMoments = Vec<12>;

inline PackedMoments pack(const RigidBodyMoments& m) {
    PackedMoments p;
    const auto& s = m.cov;
    p << m.mean, s(0, 0), s(1, 1), s(2, 2), s(0, 1), s(0, 2), s(1, 2), m.ke_mean, m.ke_corr,
        m.ke_cov;
    return p;
}

inline RigidBodyMoments unpack(const PackedMoments& p) {
    RigidBodyMoments m;
    m.mean = p.head<3>();
    Mat3 s;
    s << p(3), p(6), p(7),
         p(6), p(4), p(8),
         p(7), p(8), p(5);
    m.cov = SymMat3(s);
    m.ke_mean = p(9);
    m.ke_corr = p(10);
    m.ke_cov = p(11);
    return m;
}

inline PackedMoments moment_rates(const RigidBodyMoments& m, const InertiaModel& inertia,
                                  const SymMat3& q) {
    if ((m.cov.diag().array() < 0.0).any()) {
        throw NumericalError("moment_rates: negative angular-velocity variance");
    }
    RigidBodyMoments rate;
    rate.mean = mean_rate(m, inertia);
    rate.cov = cov_rate(m, inertia, q);
    rate.ke_mean = ke_mean_rate(inertia, q);
    rate.ke_corr = ke_corr_rate(m, inertia, q);
    rate.ke_cov = ke_cov_rate(m, q);
    return pack(rate);
}

/// RK4 integration of the coupled moment equations over a uniform grid.
/// Returns one state per grid point. Throws NumericalError if a variance
/// goes negative (closure breakdown).
inline std::vector<RigidBodyMoments> propagate_moments(const RigidBodyMoments& initial,
                                                       const InertiaModel& inertia,
                                                       const SymMat3& q, const TimeGrid& grid) {
    std::vector<RigidBodyMoments> out;
    out.reserve(grid.size());
    out.push_back(initial);
    PackedMoments y = pack(initial);
    auto field = [&](double, const PackedMoments& p) {
        return moment_rates(unpack(p), inertia, q);
    };
    for (std::size_t k = 1; k < grid.size(); ++k) {
        // unpack() symmetrizes, so each step starts from an exactly symmetric S.
        y = rk4_step(field, grid[k - 1], y, grid.step());
        RigidBodyMoments m = unpack(y);
        if ((m.cov.diag().array() < 0.0).any()) {
            throw NumericalError("propagate_moments: negative angular-velocity variance at t = " +
                                 std::to_string(grid[k]));
        }
        out.push_back(m);
    }
    return out;
}

}  // namespace stochinv::rigidbody
