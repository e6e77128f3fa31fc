#include <gtest/gtest.h>

#include <stochinv/rigidbody.hpp>
#include <stochinv/sde.hpp>
#include <stochinv/stats.hpp>

using namespace stochinv;

namespace {

FunctionModel<3, 3> zero_model() {
    return {[](double, const Vec3&) { return Vec3::Zero().eval(); },
            [](double, const Vec3&) { return Mat3::Zero().eval(); }, SymMat3()};
}

}  // namespace

TEST(EmStep, ZeroFieldsLeaveStateUnchanged) {
    auto m = zero_model();
    Vec3 x(0.3, -1.0, 2.0);
    EXPECT_EQ(em_step(m, 0.0, x, 0.5, Vec3(1, 2, 3)), x);
}

TEST(EmStep, BrownianModelAddsIncrement) {
    auto m = brownian_model<3>(SymMat3::identity());
    Vec3 x(1, 2, 3), db(0.1, -0.2, 0.3);
    EXPECT_EQ(em_step(m, 0.0, x, 0.1, db), x + db);
}

TEST(EmStep, PrincipalAxisSpinIsEquilibrium) {
    rigidbody::RigidBodyModel m(rigidbody::InertiaModel({10, 12, 14}), SymMat3());
    Vec3 x(1, 0, 0);
    EXPECT_EQ(em_step(m, 0.0, x, 0.1, Vec3::Zero()), x);
}

TEST(EmStep, RejectsNonPositiveDt) {
    auto m = zero_model();
    EXPECT_THROW(em_step(m, 0.0, Vec3::Zero(), 0.0, Vec3::Zero()), std::invalid_argument);
}

TEST(TimeGrid, SpanCountsPoints) {
    auto g = TimeGrid::span(100.0, 0.1);
    EXPECT_EQ(g.size(), 1001u);
    EXPECT_NEAR(g.back(), 100.0, 1e-12);
    EXPECT_THROW(TimeGrid::span(1.0, 0.3), std::invalid_argument);
    EXPECT_THROW(TimeGrid::span(1.0, 0.0), std::invalid_argument);
}

TEST(PropagateEnsemble, NoNoiseNoDriftIsConstant) {
    auto m = zero_model();
    GaussianBelief<3> b(Vec3(1, 2, 3), SymMat3::identity());
    auto hist = propagate_ensemble(m, b, TimeGrid(0.0, 0.5, 4), 50, 9);
    ASSERT_EQ(hist.size(), 5u);
    for (const auto& e : hist) EXPECT_EQ(e.states, hist.front().states);
}

TEST(PropagateEnsemble, BrownianCovarianceGrowsLinearly) {
    const double q = 0.4, t_final = 2.0;
    auto m = brownian_model<3>(SymMat3::scaled_identity(q));
    GaussianBelief<3> b(Vec3::Zero(), SymMat3());
    InvariantFn<3> none;
    MomentEntry<3> last;
    propagate_ensemble(m, b, TimeGrid(0.0, 0.1, 20), 20000, 5,
                       [&](const Ensemble<3>& e) { last = ensemble_stats(e); });
    EXPECT_NEAR(last.time, t_final, 1e-12);
    for (int i = 0; i < 3; ++i) {
        // SE of a sample variance of a Gaussian: var * sqrt(2/(n-1)).
        double se = q * t_final * std::sqrt(2.0 / 19999.0);
        EXPECT_NEAR(last.cov(i, i), q * t_final, 3.0 * se);
    }
}

TEST(PropagateEnsemble, DeterministicAcrossWorkerCounts) {
    rigidbody::RigidBodyModel m(rigidbody::InertiaModel({10, 12, 14}),
                                SymMat3::diagonal({0.005, 0.002, 0.003}));
    GaussianBelief<3> b(Vec3::Constant(0.02), SymMat3::scaled_identity(2e-5));
    TimeGrid g(0.0, 0.1, 30);
    PropagateOptions one{.substeps = 2, .workers = 1};
    PropagateOptions many{.substeps = 2, .workers = 7};
    auto a = propagate_ensemble(m, b, g, 301, 1234, one);
    auto c = propagate_ensemble(m, b, g, 301, 1234, many);
    ASSERT_EQ(a.size(), c.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        ASSERT_EQ(a[k].states.size(), c[k].states.size());
        for (std::size_t i = 0; i < a[k].states.size(); ++i) {
            ASSERT_EQ(std::memcmp(a[k].states[i].data(), c[k].states[i].data(), sizeof(Vec3)), 0);
        }
    }
    auto d = propagate_ensemble(m, b, g, 301, 1235, one);
    EXPECT_NE(a.back().states[0], d.back().states[0]);
}

TEST(PropagateEnsemble, DivergenceAborts) {
    // Blow-up drift x' = x^2 diverges in finite time for every path.
    FunctionModel<1, 1> m{[](double, const Vec<1>& x) { return Vec<1>(x(0) * x(0)); },
                          [](double, const Vec<1>&) { return Mat<1>::Zero().eval(); },
                          SymMat<1>()};
    GaussianBelief<1> b(Vec<1>(10.0), SymMat<1>());
    auto run = [&] { propagate_ensemble(m, b, TimeGrid(0.0, 0.1, 100), 10, 1); };
    EXPECT_THROW(run(), NumericalError);
}

TEST(PropagateEnsemble, RejectsBadArguments) {
    auto m = brownian_model<3>(SymMat3::identity());
    GaussianBelief<3> b(Vec3::Zero(), SymMat3());
    EXPECT_THROW(propagate_ensemble(m, b, TimeGrid(0.0, 0.1, 2), 1, 1), std::invalid_argument);
    Mat3 q = Mat3::Identity();
    q(0, 2) = q(2, 0) = 0.1;
    auto corr = brownian_model<3>(SymMat3(q));
    EXPECT_THROW(propagate_ensemble(corr, b, TimeGrid(0.0, 0.1, 2), 10, 1), std::invalid_argument);
}
