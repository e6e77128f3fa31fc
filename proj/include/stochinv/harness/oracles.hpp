#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "../gaussian.hpp"
#include "../rigidbody.hpp"
#include "../stats.hpp"
#include "../twobody.hpp"
#include "report.hpp"

namespace stochinv::harness {

/// Compact number formatting for human-readable check details.
inline std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

/// Decides between two candidate rate laws with one RateLawCheck each.
/// The first candidate is the form the library uses.
struct FactorVerdict {
    RateLawCheck::Result used;
    RateLawCheck::Result alternative;
    std::string used_label;
    std::string alternative_label;
    double k = 3.0;

    bool used_ok() const { return used.within(k); }
    bool alternative_ok() const { return alternative.within(k); }
    /// Exactly one candidate is consistent with the sample.
    bool decisive() const { return used_ok() != alternative_ok(); }

    std::string verdict() const {
        if (used_ok() && !alternative_ok()) return used_label;
        if (alternative_ok() && !used_ok()) return alternative_label;
        if (used_ok()) return "indistinguishable";
        return "neither";
    }

    std::string detail() const {
        return used_label + ": z = " + num(used.z) + ", " + alternative_label +
               ": z = " + num(alternative.z) + " (observed rate " + num(used.observed_rate) +
               ", predicted " + num(used.predicted_rate) + " vs " +
               num(alternative.predicted_rate) + ", se " + num(used.residual_se) +
               "); verdict: " + verdict();
    }
};

/// Compares d/dt E[U_K^2] from the sample against
///   mu_K tr(J^{-1} Q) + tr(corr Q)   (used)
///   mu_K tr(J Q)      + tr(corr Q)   (alternative)
/// over one window of observed ensembles.
class KeCorrFactorOracle {
public:
    KeCorrFactorOracle(const rigidbody::InertiaModel& inertia, const SymMat3& q, std::size_t paths)
        : inertia_(inertia), q_(q), derived_(paths), alternative_(paths), y_(paths), r1_(paths),
          r2_(paths) {
        tr_jinv_q_ = q.diag().cwiseQuotient(inertia.principal()).sum();
        tr_j_q_ = q.diag().dot(inertia.principal());
    }

    void observe(const Ensemble<3>& e) {
        for (std::size_t i = 0; i < e.size(); ++i) {
            if (e.divergent[i]) {
                derived_.drop(i);
                alternative_.drop(i);
                y_[i] = r1_[i] = r2_[i] = 0.0;
                continue;
            }
            const Vec3& w = e.states[i];
            double u = rigidbody::kinetic_energy(w, inertia_).value;
            double quad = w.dot(q_.matrix() * w);
            y_[i] = u * u;
            r1_[i] = u * tr_jinv_q_ + quad;
            r2_[i] = u * tr_j_q_ + quad;
        }
        derived_.observe(e.time, y_, r1_);
        alternative_.observe(e.time, y_, r2_);
    }

    bool applicable() const { return q_.trace() > 0.0; }

    FactorVerdict verdict() const {
        return {derived_.result(), alternative_.result(), "mu_K tr(J^-1 Q)", "mu_K tr(J Q)"};
    }

    Check check() const {
        if (!applicable()) return {"ke_corr_factor", true, "not applicable: Q = 0"};
        auto v = verdict();
        return {"ke_corr_factor", v.used_ok(), v.detail()};
    }

private:
    rigidbody::InertiaModel inertia_;
    SymMat3 q_;
    double tr_jinv_q_ = 0.0, tr_j_q_ = 0.0;
    RateLawCheck derived_, alternative_;
    std::vector<double> y_, r1_, r2_;
};

/// For isotropic Q = pI, compares d/dt E[h^2] against 8p E[h|r|^2] (used)
/// and 24p E[h|r|^2] (alternative).
class RhFactorOracle {
public:
    RhFactorOracle(double p, std::size_t paths)
        : p_(p), derived_(paths), alternative_(paths), y_(paths), r1_(paths), r2_(paths) {}

    void observe(const Ensemble<6>& e) {
        for (std::size_t i = 0; i < e.size(); ++i) {
            if (e.divergent[i]) {
                derived_.drop(i);
                alternative_.drop(i);
                y_[i] = r1_[i] = r2_[i] = 0.0;
                continue;
            }
            auto s = twobody::TwoBodyState::from_vector(e.states[i]);
            double h = twobody::h_invariant(s).value;
            double vv = twobody::v_vector(s).squaredNorm();
            y_[i] = h * h;
            r1_[i] = twobody::kIsotropicRhFactor * p_ * vv;
            r2_[i] = twobody::kIsotropicRhFactorAlternative * p_ * vv;
        }
        derived_.observe(e.time, y_, r1_);
        alternative_.observe(e.time, y_, r2_);
    }

    FactorVerdict verdict() const { return {derived_.result(), alternative_.result(), "8p", "24p"}; }

    Check check() const {
        if (!(p_ > 0.0)) return {"rh_factor", true, "not applicable: Q = 0"};
        auto v = verdict();
        return {"rh_factor", v.used_ok(), v.detail()};
    }

private:
    double p_;
    RateLawCheck derived_, alternative_;
    std::vector<double> y_, r1_, r2_;
};

/// Compact covariance rate against the third-moment route at random
/// moment states. Inertia and diagonal Q are random too.
inline Check check_cov_rate_routes(std::size_t states, std::uint64_t seed) {
    RngStream rng(seed, 0);
    double worst = 0.0;
    for (std::size_t n = 0; n < states; ++n) {
        Vec3 j = (1.0 + 19.0 * Vec3(rng.uniform(), rng.uniform(), rng.uniform()).array()).matrix();
        rigidbody::InertiaModel inertia(j);
        Mat3 a;
        for (int i = 0; i < 3; ++i) a.row(i) = 0.6 * rng.normal_vec<3>().transpose();
        rigidbody::RigidBodyMoments m;
        m.mean = rng.normal_vec<3>();
        m.cov = SymMat3(a * a.transpose());
        SymMat3 q = SymMat3::diagonal(rng.normal_vec<3>().cwiseAbs());
        auto routes = rigidbody::cov_rate_routes(m, inertia, q);
        double scale = std::max(1.0, routes.compact.matrix().cwiseAbs().maxCoeff());
        worst = std::max(worst, routes.mismatch / scale);
    }
    bool pass = worst <= rigidbody::kCovRateConsistencyTol;
    return {"cov_rate_routes", pass,
            std::to_string(states) + " random states, worst mismatch " + num(worst) +
                " (tolerance " + num(rigidbody::kCovRateConsistencyTol) + ")"};
}

/// Algebraic identities of the two-body invariant at random states:
/// Lagrange identity, v orthogonal to r, |v|^2 = h|r|^2, symmetric half
/// Hessian whose velocity block is |r|^2 I - r r^T (PSD, rank <= 2), and
/// analytic derivatives of h and U_K against finite differences.
inline std::vector<Check> check_identities(std::size_t states, std::uint64_t seed) {
    using namespace twobody;
    RngStream rng(seed, 0);
    std::size_t bad_lagrange = 0, bad_orth = 0, bad_vnorm = 0, bad_hess = 0;
    std::vector<Vec6> pts;
    std::vector<Vec3> wpts;
    pts.reserve(states);
    const auto g = twobody_diffusion();
    for (std::size_t n = 0; n < states; ++n) {
        TwoBodyState s{rng.normal_vec<3>(), rng.normal_vec<3>()};
        pts.push_back(s.to_vector());
        wpts.push_back(rng.normal_vec<3>());
        double rr = s.r.squaredNorm();
        double scale = rr * s.rdot.squaredNorm();
        AngularMomentumSq h;
        try {
            h = h_invariant(s);
        } catch (const NumericalError&) {
            ++bad_lagrange;
            continue;
        }
        if (std::abs(h.value - s.r.cross(s.rdot).squaredNorm()) > 1e-12 * scale) ++bad_lagrange;
        Vec3 v = v_vector(s);
        if (std::abs(v.dot(s.r)) > 1e-10 * std::max(v.norm() * s.r.norm(), 1e-300) + 1e-15 * scale) {
            ++bad_orth;
        }
        double vv = v.squaredNorm();
        if (std::abs(vv - h.value * rr) > 1e-10 * std::max(vv, rr * scale)) ++bad_vnorm;

        Mat3 block = g.transpose() * h.hessian_half * g;
        Mat3 expect = projected_hessian(s.r);
        Eigen::SelfAdjointEigenSolver<Mat3> es(expect);
        bool ok = (h.hessian_half - h.hessian_half.transpose()).cwiseAbs().maxCoeff() == 0.0 &&
                  (block - expect).cwiseAbs().maxCoeff() <= 1e-13 * std::max(1.0, rr) &&
                  std::abs(es.eigenvalues()(0)) <= 1e-12 * rr && es.eigenvalues()(1) >= -1e-12;
        if (!ok) ++bad_hess;
    }

    InvariantFn<6> h_fn{
        [](const Vec6& x) { return h_invariant(TwoBodyState::from_vector(x)).value; },
        [](const Vec6& x) { return h_invariant(TwoBodyState::from_vector(x)).gradient; },
        [](const Vec6& x) { return h_invariant(TwoBodyState::from_vector(x)).hessian_half; }};
    const rigidbody::InertiaModel inertia({10.0, 12.0, 14.0});
    InvariantFn<3> ke_fn{
        [&](const Vec3& w) { return rigidbody::kinetic_energy(w, inertia).value; },
        [&](const Vec3& w) { return rigidbody::kinetic_energy(w, inertia).gradient; },
        [&](const Vec3& w) { return rigidbody::kinetic_energy(w, inertia).hessian_half; }};
    double fd_h = invariant_derivative_mismatch<6>(h_fn, pts);
    double fd_ke = invariant_derivative_mismatch<3>(ke_fn, wpts);
    constexpr double kFdTol = 1e-6;

    auto count = [&](const char* name, std::size_t bad, const char* what) {
        return Check{name, bad == 0,
                     std::to_string(states - bad) + "/" + std::to_string(states) + " states: " + what};
    };
    return {
        count("lagrange_identity", bad_lagrange, "h = |r x rdot|^2 to 1e-12 relative"),
        count("v_orthogonal_r", bad_orth, "|v . r| <= 1e-10 |v||r|"),
        count("v_norm_identity", bad_vnorm, "|v|^2 = h |r|^2"),
        count("h_hessian_projection", bad_hess,
              "symmetric half Hessian, G^T H G = |r|^2 I - r r^T, PSD with rank <= 2"),
        {"h_derivatives_fd", fd_h <= kFdTol, "worst relative mismatch " + num(fd_h)},
        {"ke_derivatives_fd", fd_ke <= kFdTol, "worst relative mismatch " + num(fd_ke)},
    };
}

/// Isserlis third moments E[X_i X_j X_k] of a fixed correlated Gaussian
/// against one shared sample: every unique index triple within 3 SE.
inline Check check_third_moments(std::size_t samples, std::uint64_t seed) {
    Mat3 s;
    s << 2.0, 0.3, 0.5,
         0.3, 1.0, -0.4,
         0.5, -0.4, 1.5;
    GaussianBelief<3> b(Vec3(1.0, -0.5, 0.25), SymMat3(s));
    Mat3 l = psd_factor(b.cov());

    std::vector<std::array<int, 3>> triples;
    for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j)
            for (int k = j; k < 3; ++k) triples.push_back({i, j, k});
    std::vector<double> sum(triples.size(), 0.0), sq(triples.size(), 0.0);
    RngStream rng(seed, 0);
    for (std::size_t n = 0; n < samples; ++n) {
        Vec3 x = b.mean() + l * rng.normal_vec<3>();
        for (std::size_t t = 0; t < triples.size(); ++t) {
            double p = x(triples[t][0]) * x(triples[t][1]) * x(triples[t][2]);
            sum[t] += p;
            sq[t] += p * p;
        }
    }
    const auto dn = static_cast<double>(samples);
    double worst = 0.0;
    std::size_t inside = 0;
    for (std::size_t t = 0; t < triples.size(); ++t) {
        double mean = sum[t] / dn;
        double var = (sq[t] - dn * mean * mean) / (dn - 1.0);
        double se = std::sqrt(var / dn);
        double z = std::abs(mean - gaussian_third_moment(triples[t][0], triples[t][1],
                                                         triples[t][2], b)) / se;
        worst = std::max(worst, z);
        if (z <= 3.0) ++inside;
    }
    return {"gaussian_third_moments", inside == triples.size(),
            std::to_string(inside) + "/" + std::to_string(triples.size()) +
                " index triples within 3 SE at " + std::to_string(samples) +
                " samples, worst |z| = " + num(worst)};
}

}  // namespace stochinv::harness
