#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "linalg.hpp"
#include "sde.hpp"

namespace stochinv {

/// Scalar function of the state, optionally with its gradient and half
/// Hessian (H = 1/2 d^2U/ds ds^T).
template <int N>
struct InvariantFn {
    std::function<double(const Vec<N>&)> value;
    std::function<Vec<N>(const Vec<N>&)> gradient;       // may be empty
    std::function<Mat<N>(const Vec<N>&)> hessian_half;   // may be empty

    double operator()(const Vec<N>& s) const { return value(s); }
};

/// Worst relative mismatch between supplied derivatives and central finite
/// differences of the value, over the given points. Relative to the
/// largest derivative entry at each point (floored at 1).
template <int N>
double invariant_derivative_mismatch(const InvariantFn<N>& u, std::span<const Vec<N>> points,
                                     double step = 1e-5) {
    double worst = 0.0;
    for (const auto& s : points) {
        if (u.gradient) {
            Vec<N> g = u.gradient(s);
            Vec<N> fd;
            for (int i = 0; i < N; ++i) {
                Vec<N> e = Vec<N>::Zero();
                e(i) = step;
                fd(i) = (u.value(s + e) - u.value(s - e)) / (2.0 * step);
            }
            double scale = std::max(1.0, g.cwiseAbs().maxCoeff());
            worst = std::max(worst, (g - fd).cwiseAbs().maxCoeff() / scale);
        }
        if (u.hessian_half && u.gradient) {
            Mat<N> h = u.hessian_half(s);
            Mat<N> fd;
            for (int j = 0; j < N; ++j) {
                Vec<N> e = Vec<N>::Zero();
                e(j) = step;
                fd.col(j) = 0.5 * (u.gradient(s + e) - u.gradient(s - e)) / (2.0 * step);
            }
            double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
            worst = std::max(worst, (h - fd).cwiseAbs().maxCoeff() / scale);
        }
    }
    return worst;
}

/// Sample moments of an ensemble at one instant. Divergent paths are
/// excluded and counted.
template <int N>
struct MomentEntry {
    double time = 0.0;
    std::size_t samples = 0;
    std::size_t excluded = 0;
    Vec<N> mean = Vec<N>::Zero();
    SymMat<N> cov;          // 1/(n-1) normalization
    Vec<N> mean_se = Vec<N>::Zero();

    // Invariant statistics; zero when no invariant was supplied.
    double u1 = 0.0;        // E[U]
    double u2 = 0.0;        // E[U^2]
    double u_var = 0.0;     // cov[U], 1/(n-1) normalization
    double u1_se = 0.0;
    double u_var_se = 0.0;

    Vec<N> band_lo() const { return mean - 3.0 * cov.diag().cwiseSqrt(); }
    Vec<N> band_hi() const { return mean + 3.0 * cov.diag().cwiseSqrt(); }
    double u_band_lo() const { return u1 - 3.0 * std::sqrt(u_var); }
    double u_band_hi() const { return u1 + 3.0 * std::sqrt(u_var); }
};

template <int N>
using MomentSeries = std::vector<MomentEntry<N>>;

/// Mean and standard error of a scalar sample, summed in index order.
struct ScalarSummary {
    double mean = 0.0;
    double var = 0.0;  // 1/(n-1)
    double se = 0.0;
    std::size_t n = 0;
};

inline ScalarSummary summarize(std::span<const double> x) {
    ScalarSummary s;
    s.n = x.size();
    if (s.n == 0) return s;
    double sum = 0.0;
    for (double v : x) sum += v;
    s.mean = sum / static_cast<double>(s.n);
    if (s.n < 2) return s;
    double ss = 0.0;
    for (double v : x) ss += (v - s.mean) * (v - s.mean);
    s.var = ss / static_cast<double>(s.n - 1);
    s.se = std::sqrt(s.var / static_cast<double>(s.n));
    return s;
}

/// Standard error of the unbiased sample variance, from the sample fourth
/// central moment: Var(s^2) ~ (m4 - (n-3)/(n-1) s^4) / n.
inline double variance_standard_error(std::span<const double> x, double mean, double var) {
    auto n = static_cast<double>(x.size());
    if (n < 4) return 0.0;
    double m4 = 0.0;
    for (double v : x) {
        double d = (v - mean) * (v - mean);
        m4 += d * d;
    }
    m4 /= n;
    double v = (m4 - (n - 3.0) / (n - 1.0) * var * var) / n;
    return std::sqrt(std::max(0.0, v));
}

template <int N>
MomentEntry<N> ensemble_stats(const Ensemble<N>& ens,
                              const InvariantFn<N>* invariant = nullptr) {
    MomentEntry<N> out;
    out.time = ens.time;
    std::vector<const Vec<N>*> used;
    used.reserve(ens.size());
    for (std::size_t i = 0; i < ens.size(); ++i) {
        if (ens.divergent.empty() || !ens.divergent[i]) used.push_back(&ens.states[i]);
    }
    out.samples = used.size();
    out.excluded = ens.size() - used.size();
    if (out.samples < 2) throw std::invalid_argument("ensemble_stats: need at least 2 samples");
    const auto n = static_cast<double>(out.samples);

    Vec<N> sum = Vec<N>::Zero();
    for (const auto* x : used) sum += *x;
    out.mean = sum / n;
    Mat<N> ss = Mat<N>::Zero();
    for (const auto* x : used) {
        Vec<N> d = *x - out.mean;
        ss += d * d.transpose();
    }
    out.cov = SymMat<N>(ss / (n - 1.0));
    out.mean_se = (out.cov.diag() / n).cwiseSqrt();

    if (invariant != nullptr) {
        std::vector<double> u(used.size());
        for (std::size_t i = 0; i < used.size(); ++i) u[i] = (*invariant)(*used[i]);
        auto su = summarize(u);
        out.u1 = su.mean;
        out.u_var = su.var;
        out.u1_se = su.se;
        double sq = 0.0;
        for (double v : u) sq += v * v;
        out.u2 = sq / n;
        out.u_var_se = variance_standard_error(u, su.mean, su.var);
    }
    return out;
}

/// d/dt of a uniformly sampled series: central differences in the interior,
/// second-order one-sided differences at the two ends.
inline std::vector<double> finite_difference_rate(std::span<const double> y, double step) {
    const std::size_t n = y.size();
    if (n < 3) throw std::invalid_argument("finite_difference_rate: need at least 3 points");
    if (!(step > 0.0)) throw std::invalid_argument("finite_difference_rate: step must be positive");
    std::vector<double> d(n);
    d[0] = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * step);
    for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (y[i + 1] - y[i - 1]) / (2.0 * step);
    d[n - 1] = (3.0 * y[n - 1] - 4.0 * y[n - 2] + y[n - 3]) / (2.0 * step);
    return d;
}

/// Rate estimates of a selected quantity of a moment series. The series
/// must be uniformly spaced.
template <int N, typename Selector>
std::vector<double> finite_difference_expectation_rate(const MomentSeries<N>& series,
                                                       Selector&& select) {
    if (series.size() < 3) {
        throw std::invalid_argument("finite_difference_expectation_rate: need at least 3 points");
    }
    const double step = series[1].time - series[0].time;
    for (std::size_t i = 1; i < series.size(); ++i) {
        double gap = series[i].time - series[i - 1].time;
        if (std::abs(gap - step) > 1e-9 * std::max(1.0, std::abs(step))) {
            throw std::invalid_argument("finite_difference_expectation_rate: non-uniform grid");
        }
    }
    std::vector<double> y;
    y.reserve(series.size());
    for (const auto& e : series) y.push_back(select(e));
    return finite_difference_rate(y, step);
}

/// Tests a candidate rate law d/dt E[y] = E[r(X)] over a time window.
///
/// Per path it accumulates D = y(t1) - y(t0) - integral of r over the path
/// (trapezoid on the sampled grid). If the law is right, E[D] is zero up
/// to time-discretization error, and the paths are independent, so the
/// sample standard error of D is exact.
class RateLawCheck {
public:
    explicit RateLawCheck(std::size_t paths)
        : start_(paths), last_y_(paths), last_r_(paths), integral_(paths), dropped_(paths, 0) {}

    /// Exclude path i (e.g. after it diverged). Its values are ignored.
    void drop(std::size_t i) { dropped_.at(i) = 1; }

    /// Feed per-path values of y and r at the next grid time.
    void observe(double t, std::span<const double> y, std::span<const double> r) {
        if (y.size() != start_.size() || r.size() != start_.size()) {
            throw std::invalid_argument("RateLawCheck: path count mismatch");
        }
        if (!started_) {
            t0_ = t;
            for (std::size_t i = 0; i < y.size(); ++i) start_[i] = y[i];
            started_ = true;
        } else {
            double dt = t - t_last_;
            for (std::size_t i = 0; i < y.size(); ++i) {
                integral_[i] += 0.5 * dt * (last_r_[i] + r[i]);
            }
        }
        for (std::size_t i = 0; i < y.size(); ++i) {
            last_y_[i] = y[i];
            last_r_[i] = r[i];
        }
        t_last_ = t;
    }

    struct Result {
        double window = 0.0;
        double observed_rate = 0.0;   // (E[y(t1)] - E[y(t0)]) / window
        double predicted_rate = 0.0;  // E[integral r] / window
        double residual_se = 0.0;     // standard error of the rate residual
        double z = 0.0;               // (observed - predicted) / se
        bool within(double k) const { return std::abs(z) <= k; }
    };

    Result result() const {
        Result res;
        res.window = t_last_ - t0_;
        if (!(res.window > 0.0)) throw std::logic_error("RateLawCheck: empty window");
        std::vector<double> dy, d, integ;
        for (std::size_t i = 0; i < start_.size(); ++i) {
            if (dropped_[i]) continue;
            dy.push_back(last_y_[i] - start_[i]);
            integ.push_back(integral_[i]);
            d.push_back(dy.back() - integral_[i]);
        }
        if (d.size() < 2) throw std::logic_error("RateLawCheck: fewer than 2 paths left");
        auto s_dy = summarize(dy);
        auto s_int = summarize(integ);
        auto s_d = summarize(d);
        res.observed_rate = s_dy.mean / res.window;
        res.predicted_rate = s_int.mean / res.window;
        res.residual_se = s_d.se / res.window;
        double diff = res.observed_rate - res.predicted_rate;
        res.z = res.residual_se > 0.0 ? diff / res.residual_se : (diff == 0.0 ? 0.0 : INFINITY);
        return res;
    }

private:
    std::vector<double> start_, last_y_, last_r_, integral_;
    std::vector<std::uint8_t> dropped_;
    double t0_ = 0.0, t_last_ = 0.0;
    bool started_ = false;
};

}  // namespace stochinv
