#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <stochinv/stats.hpp>
#include <stochinv/twobody.hpp>

using namespace stochinv;
using namespace stochinv::twobody;

namespace {

TwoBodyState random_state(RngStream& rng) {
    return {rng.normal_vec<3>(), rng.normal_vec<3>()};
}

SymMat3 random_psd(RngStream& rng) {
    Mat3 a;
    for (int i = 0; i < 3; ++i) a.row(i) = rng.normal_vec<3>().transpose();
    return SymMat3(a * a.transpose());
}

const SymMat3 kQ = SymMat3::diagonal({0.005, 0.002, 0.003});

InvariantFn<6> h_fn() {
    return {[](const Vec6& x) { return h_invariant(TwoBodyState::from_vector(x)).value; },
            [](const Vec6& x) { return h_invariant(TwoBodyState::from_vector(x)).gradient; },
            [](const Vec6& x) { return h_invariant(TwoBodyState::from_vector(x)).hessian_half; }};
}

}  // namespace

TEST(TwoBodyDrift, CircularOrbitAcceleration) {
    const double mu = 3.986e14, radius = 7.0e6;
    GravModel g(mu, SymMat3(), 1.0);
    TwoBodyState s{Vec3(radius, 0, 0), Vec3(0, std::sqrt(mu / radius), 0)};
    Vec6 f = twobody_drift(s, g);
    EXPECT_EQ(f.head<3>(), s.rdot);
    EXPECT_NEAR(f(3), -mu / (radius * radius), 1e-12 * mu / (radius * radius));
    EXPECT_EQ(f(4), 0.0);
    EXPECT_EQ(f(5), 0.0);
}

TEST(TwoBodyDrift, UnitSphere) {
    RngStream rng(1, 0);
    GravModel g(1.0, SymMat3(), 1e-3);
    for (int i = 0; i < 100; ++i) {
        Vec3 r = rng.normal_vec<3>().normalized();
        Vec6 f = twobody_drift({r, Vec3::Zero()}, g);
        EXPECT_LT((f.tail<3>() + r).norm(), 1e-15);
    }
}

TEST(TwoBodyDrift, SingularityRejected) {
    GravModel g(1.0, SymMat3(), 0.1);
    EXPECT_THROW(twobody_drift({Vec3(0.05, 0, 0), Vec3::Zero()}, g), SingularityError);
    EXPECT_THROW(GravModel(0.0, SymMat3(), 0.1), std::invalid_argument);
    EXPECT_THROW(GravModel(1.0, SymMat3::diagonal({1, -1, 1}), 0.1), std::invalid_argument);
}

TEST(TwoBodyDrift, ClosedOrbitAfterOnePeriod) {
    GravModel g(1.0, SymMat3(), 1e-3);
    TwoBodyModel model(g);
    TwoBodyState s0{Vec3(1.0, 0, 0), Vec3(0, 1.1, 0.1)};
    const double period = orbital_period(s0, 1.0);
    GaussianBelief<6> b(s0.to_vector(), SymMat6());
    Vec6 last;
    propagate_ensemble(model, b, TimeGrid(0.0, period / 50.0, 50), 2, 1,
                       [&](const Ensemble<6>& e) { last = e.states[0]; },
                       PropagateOptions{.substeps = 20000, .workers = 1});
    Vec6 x0 = s0.to_vector();
    EXPECT_LT((last - x0).norm() / x0.norm(), 1e-4);
}

TEST(TwoBodyStep, SplitStepConservesAngularMomentumWithoutNoise) {
    GravModel g(1.0, SymMat3(), 1e-3);
    TwoBodyModel model(g);
    Vec6 x = TwoBodyState{Vec3(1.0, 0.2, 0), Vec3(-0.1, 0.9, 0.3)}.to_vector();
    Vec6 y = x;
    const double h0 = h_invariant(TwoBodyState::from_vector(x)).value;
    const double dt = 1e-3;
    for (int k = 0; k < 10000; ++k) {
        x = model.step(0.0, x, dt, Vec3::Zero());
        y = em_step(model, 0.0, y, dt, Vec3::Zero());
    }
    EXPECT_NEAR(h_invariant(TwoBodyState::from_vector(x)).value, h0, 1e-12);
    // Plain Euler-Maruyama drifts by O(dt) per unit time.
    EXPECT_GT(std::abs(h_invariant(TwoBodyState::from_vector(y)).value - h0), 1e-3);
}

TEST(HInvariant, SimpleValues) {
    EXPECT_DOUBLE_EQ(h_invariant({Vec3(1, 0, 0), Vec3(0, 1, 0)}).value, 1.0);
    EXPECT_EQ(h_invariant({Vec3(1, 2, 3), Vec3(2, 4, 6)}).value, 0.0);
}

TEST(HInvariant, LagrangeIdentityAndVectorIdentities) {
    RngStream rng(2, 0);
    for (int i = 0; i < 10000; ++i) {
        auto s = random_state(rng);
        double h = h_invariant(s).value;
        double cross = s.r.cross(s.rdot).squaredNorm();
        double scale = s.r.squaredNorm() * s.rdot.squaredNorm();
        ASSERT_LE(std::abs(h - cross), 1e-12 * scale);
        Vec3 v = v_vector(s);
        ASSERT_LE(std::abs(v.dot(s.r)), 1e-10 * std::max(v.norm() * s.r.norm(), 1e-300) + 1e-15 * scale);
        double vv = v.squaredNorm(), hr = h * s.r.squaredNorm();
        ASSERT_LE(std::abs(vv - hr), 1e-10 * std::max(vv, s.r.squaredNorm() * scale));
    }
}

TEST(HInvariant, DerivativesMatchFiniteDifferences) {
    RngStream rng(3, 0);
    std::vector<Vec6> pts(100);
    for (auto& p : pts) p = random_state(rng).to_vector();
    EXPECT_LT(invariant_derivative_mismatch<6>(h_fn(), pts), 1e-6);
}

TEST(HInvariant, HessianSymmetricAndVelocityBlockProjects) {
    RngStream rng(4, 0);
    auto g = twobody_diffusion();
    for (int i = 0; i < 10000; ++i) {
        auto s = random_state(rng);
        auto h = h_invariant(s);
        ASSERT_EQ((h.hessian_half - h.hessian_half.transpose()).cwiseAbs().maxCoeff(), 0.0);
        Mat3 block = g.transpose() * h.hessian_half * g;
        Mat3 expect = projected_hessian(s.r);
        ASSERT_LT((block - expect).cwiseAbs().maxCoeff(), 1e-13 * std::max(1.0, s.r.squaredNorm()));
        Eigen::SelfAdjointEigenSolver<Mat3> es(expect);
        ASSERT_LT(std::abs(es.eigenvalues()(0)), 1e-12 * s.r.squaredNorm());  // rank <= 2
        ASSERT_GE(es.eigenvalues()(1), -1e-12);
    }
}

TEST(VVector, Examples) {
    EXPECT_EQ(v_vector({Vec3(1, 2, 3), Vec3(-2, -4, -6)}), Vec3::Zero());
    EXPECT_EQ(v_vector({Vec3(1, 0, 0), Vec3(3, 2, 0)}), Vec3(0, 2, 0));
}

TEST(MuHRate, ExactAndBounds) {
    EXPECT_EQ(mu_h_rate_exact(SymMat3::identity(), SymMat3()), 0.0);
    EXPECT_DOUBLE_EQ(mu_h_rate_exact(SymMat3::identity(), SymMat3::diagonal({1, 2, 3})), 12.0);

    auto b = mu_h_rate_bounds(1.0, kQ);
    EXPECT_NEAR(b.lower, 0.005, 1e-16);
    EXPECT_NEAR(b.upper, 0.008, 1e-16);

    auto tie = mu_h_rate_bounds(2.5, SymMat3::scaled_identity(0.3));
    EXPECT_DOUBLE_EQ(tie.lower, tie.upper);
    EXPECT_DOUBLE_EQ(tie.lower, 2.0 * 0.3 * 2.5);
}

TEST(MuHRate, ContainmentSweep) {
    RngStream rng(5, 0);
    for (int i = 0; i < 1000; ++i) {
        SymMat3 corr = random_psd(rng);
        SymMat3 q = i % 2 == 0 ? kQ : random_psd(rng);
        double exact = mu_h_rate_exact(corr, q);
        auto b = mu_h_rate_bounds(corr.trace(), q);
        double slack = 1e-12 * corr.trace() * q.trace();
        ASSERT_TRUE(b.contains(exact, slack)) << i;
    }
}

TEST(RhRate, Bounds) {
    auto b = R_h_rate_bounds(1.0, kQ);
    EXPECT_NEAR(b.lower, 0.018, 1e-16);
    EXPECT_NEAR(b.upper, 0.036, 1e-16);
    auto tie = R_h_rate_bounds(1.5, SymMat3::scaled_identity(0.2));
    EXPECT_DOUBLE_EQ(tie.lower, tie.upper);
    EXPECT_DOUBLE_EQ(tie.lower, kIsotropicRhFactor * 0.2 * 1.5);
}

namespace {

Ensemble<6> random_ensemble(RngStream& rng, std::size_t n) {
    Ensemble<6> e;
    for (std::size_t i = 0; i < n; ++i) {
        TwoBodyState s = random_state(rng);
        s.r += Vec3(3, 0, 0);
        e.states.push_back(s.to_vector());
    }
    e.divergent.assign(n, 0);
    return e;
}

}  // namespace

TEST(RhRate, ZeroNoiseAndRadialMotion) {
    RngStream rng(6, 0);
    auto e = random_ensemble(rng, 50);
    EXPECT_EQ(R_h_rate_exact(e, SymMat3(), 1e-3).value, 0.0);
    for (auto& x : e.states) x.tail<3>() = 0.7 * x.head<3>();
    EXPECT_NEAR(R_h_rate_exact(e, kQ, 1e-3).value, 0.0, 1e-12);
}

TEST(RhRate, IsotropicNoiseGivesEightP) {
    RngStream rng(7, 0);
    const double p = 0.37;
    auto e = random_ensemble(rng, 200);
    auto r = R_h_rate_exact(e, SymMat3::scaled_identity(p), 1e-3);
    EXPECT_NEAR(r.value, 8.0 * p * r.e_h_r_sq, 1e-12 * r.value);
}

TEST(RhRate, ContainmentSweepOnRandomEnsembles) {
    RngStream rng(8, 0);
    for (int i = 0; i < 1000; ++i) {
        auto e = random_ensemble(rng, 20);
        SymMat3 q = i % 2 == 0 ? kQ : random_psd(rng);
        auto r = R_h_rate_exact(e, q, 1e-3);
        auto b = R_h_rate_bounds(r.e_h_r_sq, q);
        ASSERT_TRUE(b.contains(r.value, 1e-12 * std::abs(b.upper))) << i;
    }
}

TEST(RhRate, SingularSampleRejected) {
    Ensemble<6> e;
    e.states = {TwoBodyState{Vec3(1e-4, 0, 0), Vec3(0, 1, 0)}.to_vector()};
    e.divergent = {0};
    EXPECT_THROW(R_h_rate_exact(e, kQ, 1e-3), SingularityError);
}

TEST(RhRate, UpperBoundAttainedAtExtremeEigenvectors) {
    Mat3 rot = Eigen::AngleAxisd(0.4, Vec3(1, 2, 3).normalized()).toRotationMatrix();
    SymMat3 q(rot * Vec3(0.005, 0.002, 0.003).asDiagonal() * rot.transpose());
    Eigen::SelfAdjointEigenSolver<Mat3> es(q.matrix());
    Vec3 e_min = es.eigenvectors().col(0), e_max = es.eigenvectors().col(2);
    // r along the lambda_min eigenvector, rdot along lambda_max so v is too.
    TwoBodyState s{2.0 * e_min, 0.5 * e_max};
    double integrand = R_h_rate_integrand(s, q);
    double hr = v_vector(s).squaredNorm();
    auto b = R_h_rate_bounds(hr, q);
    EXPECT_NEAR(integrand, b.upper, 1e-10 * b.upper);
    TwoBodyState low{2.0 * e_max, 0.5 * e_min};
    EXPECT_NEAR(R_h_rate_integrand(low, q), R_h_rate_bounds(v_vector(low).squaredNorm(), q).lower,
                1e-10 * b.upper);
}

TEST(MonteCarloOracle, MeanAngularMomentumRate) {
    // Larger noise than the default scenario so a short run resolves the rate.
    const SymMat3 q = SymMat3::diagonal({5e-3, 2e-3, 3e-3});
    TwoBodyModel model(GravModel(1.0, q, 1e-3));
    GaussianBelief<6> b(TwoBodyState{Vec3(1, 0, 0), Vec3(0, 1, 0)}.to_vector(),
                        SymMat6::scaled_identity(1e-4));
    const std::size_t n = 20000;
    RateLawCheck law(n);
    std::vector<double> y(n), r(n);
    propagate_ensemble(model, b, TimeGrid(0.0, 0.05, 20), n, 99, [&](const Ensemble<6>& e) {
        for (std::size_t i = 0; i < n; ++i) {
            auto s = TwoBodyState::from_vector(e.states[i]);
            y[i] = h_invariant(s).value;
            r[i] = mu_h_rate_integrand(s.r, q);
        }
        law.observe(e.time, y, r);
    }, PropagateOptions{.substeps = 10});
    auto res = law.result();
    EXPECT_TRUE(res.within(3.0)) << res.z;
    EXPECT_GT(res.observed_rate, 0.0);
}
