#include <gtest/gtest.h>

#include <cmath>

#include <stochinv/rk4.hpp>
#include <stochinv/rng.hpp>
#include <stochinv/stats.hpp>

using namespace stochinv;

namespace {

Ensemble<3> make_ensemble(std::vector<Vec3> states) {
    Ensemble<3> e;
    e.states = std::move(states);
    e.divergent.assign(e.states.size(), 0);
    return e;
}

InvariantFn<3> squared_norm() {
    return {[](const Vec3& x) { return x.squaredNorm(); },
            [](const Vec3& x) { return (2.0 * x).eval(); },
            [](const Vec3&) { return Mat3::Identity().eval(); }};
}

}  // namespace

TEST(EnsembleStats, IdenticalStatesHaveZeroSpread) {
    auto e = make_ensemble(std::vector<Vec3>(10, Vec3(1, 2, 3)));
    auto u = squared_norm();
    auto s = ensemble_stats(e, &u);
    EXPECT_EQ(s.cov.matrix(), Mat3::Zero());
    EXPECT_EQ(s.u_var, 0.0);
    EXPECT_EQ(s.u1, 14.0);
}

TEST(EnsembleStats, SymmetricPair) {
    Vec3 v(0.5, -1.0, 2.0);
    auto e = make_ensemble({v, -v});
    auto u = squared_norm();
    auto s = ensemble_stats(e, &u);
    EXPECT_DOUBLE_EQ(s.u1, v.squaredNorm());
    EXPECT_EQ(s.u_var, 0.0);
    EXPECT_EQ(s.mean, Vec3::Zero());
}

TEST(EnsembleStats, ChiSquareMoments) {
    RngStream rng(77, 0);
    std::vector<Vec3> xs(1'000'000);
    for (auto& x : xs) x = rng.normal_vec<3>();
    auto e = make_ensemble(std::move(xs));
    auto u = squared_norm();
    auto s = ensemble_stats(e, &u);
    EXPECT_LE(std::abs(s.u1 - 3.0), 3.0 * s.u1_se);
    EXPECT_LE(std::abs(s.u_var - 6.0), 3.0 * s.u_var_se);
    EXPECT_EQ(s.cov.max_asymmetry(), 0.0);
    EXPECT_TRUE((s.cov.diag().array() >= 0.0).all());
    for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(s.mean_se(i), std::sqrt(s.cov(i, i) / 1e6));
}

TEST(EnsembleStats, DivergentPathsExcluded) {
    auto e = make_ensemble({Vec3(1, 0, 0), Vec3(3, 0, 0), Vec3(1e300, 0, 0)});
    e.divergent[2] = 1;
    auto s = ensemble_stats(e);
    EXPECT_EQ(s.samples, 2u);
    EXPECT_EQ(s.excluded, 1u);
    EXPECT_DOUBLE_EQ(s.mean(0), 2.0);
}

TEST(EnsembleStats, BandsAreThreeSigma) {
    auto e = make_ensemble({Vec3(0, 0, 0), Vec3(2, 0, 0)});
    auto s = ensemble_stats(e);
    EXPECT_DOUBLE_EQ(s.band_hi()(0), 1.0 + 3.0 * std::sqrt(2.0));
    EXPECT_DOUBLE_EQ(s.band_lo()(0), 1.0 - 3.0 * std::sqrt(2.0));
}

TEST(InvariantFn, DerivativeMismatchDetectsWrongGradient) {
    RngStream rng(1, 0);
    std::vector<Vec3> pts(100);
    for (auto& p : pts) p = rng.normal_vec<3>();
    auto good = squared_norm();
    EXPECT_LT(invariant_derivative_mismatch<3>(good, pts), 1e-6);
    auto bad = good;
    bad.gradient = [](const Vec3& x) { return (2.1 * x).eval(); };
    EXPECT_GT(invariant_derivative_mismatch<3>(bad, pts), 1e-3);
}

TEST(FiniteDifference, ConstantSeries) {
    std::vector<double> y(7, 3.5);
    for (double d : finite_difference_rate(y, 0.1)) EXPECT_EQ(d, 0.0);
}

TEST(FiniteDifference, LinearSeries) {
    std::vector<double> y;
    for (int i = 0; i < 11; ++i) y.push_back(2.0 + 0.75 * (0.25 * i));
    auto d = finite_difference_rate(y, 0.25);
    for (double v : d) EXPECT_NEAR(v, 0.75, 1e-14);
}

TEST(FiniteDifference, QuadraticIsExact) {
    const double h = 0.1;
    std::vector<double> y;
    for (int i = 0; i <= 20; ++i) {
        double t = h * i;
        y.push_back(t * t);
    }
    auto d = finite_difference_rate(y, h);
    EXPECT_NEAR(d[10], 2.0, 1e-13);  // t = 1
    EXPECT_NEAR(d.front(), 0.0, 1e-13);
    EXPECT_NEAR(d.back(), 4.0, 1e-12);
}

TEST(FiniteDifference, SeriesSelectorRejectsNonUniform) {
    MomentSeries<3> s(3);
    s[0].time = 0.0;
    s[1].time = 0.1;
    s[2].time = 0.3;
    EXPECT_THROW(finite_difference_expectation_rate(s, [](const auto& e) { return e.u1; }),
                 std::invalid_argument);
    s[2].time = 0.2;
    s[0].u1 = 1.0;
    s[1].u1 = 2.0;
    s[2].u1 = 3.0;
    auto d = finite_difference_expectation_rate(s, [](const auto& e) { return e.u1; });
    EXPECT_NEAR(d[1], 10.0, 1e-12);
}

TEST(Rk4, ZeroField) {
    auto f = [](double, double) { return 0.0; };
    EXPECT_EQ(rk4_step(f, 0.0, 1.25, 0.1), 1.25);
}

TEST(Rk4, ExponentialOracle) {
    auto f = [](double, double y) { return y; };
    EXPECT_NEAR(rk4_step(f, 0.0, 1.0, 0.1), std::exp(0.1), 1e-7);
}

TEST(Rk4, ConstantFieldGrowsLinearly) {
    const double c = 4.404761904761905e-4;
    auto f = [&](double, double) { return c; };
    double y = 0.0072;
    for (int k = 1; k <= 1000; ++k) {
        y = rk4_step(f, 0.1 * (k - 1), y, 0.1);
        ASSERT_NEAR(y, 0.0072 + c * 0.1 * k, 1e-15);
    }
}

TEST(Rk4, CubicInTimeIsExact) {
    auto f = [](double t, double) { return 3.0 * t * t; };
    EXPECT_NEAR(rk4_step(f, 1.0, 1.0, 0.5), 1.5 * 1.5 * 1.5, 1e-14);
}

TEST(Rk4, NonFiniteAborts) {
    auto f = [](double, double y) { return 1.0 / (y - y); };
    EXPECT_THROW(rk4_step(f, 0.0, 1.0, 0.1), NumericalError);
}

TEST(RateLawCheck, DeterministicLinearGrowth) {
    RateLawCheck chk(3);
    for (int k = 0; k <= 10; ++k) {
        double t = 0.1 * k;
        std::vector<double> y{2.0 * t, 2.0 * t + 1.0, 2.0 * t - 4.0};
        std::vector<double> r{2.0, 2.0, 2.0};
        chk.observe(t, y, r);
    }
    auto res = chk.result();
    EXPECT_NEAR(res.observed_rate, 2.0, 1e-12);
    EXPECT_NEAR(res.predicted_rate, 2.0, 1e-12);
}

TEST(RateLawCheck, DroppedPathIgnored) {
    RateLawCheck chk(3);
    for (int k = 0; k <= 4; ++k) {
        double t = 0.25 * k;
        std::vector<double> y{t, 2.0 * t, 1e6 * t};
        std::vector<double> r{1.0, 2.0, 0.0};
        chk.observe(t, y, r);
    }
    chk.drop(2);
    auto res = chk.result();
    EXPECT_NEAR(res.observed_rate, 1.5, 1e-12);
    EXPECT_NEAR(res.predicted_rate, 1.5, 1e-12);
    EXPECT_EQ(res.z, 0.0);
}
