#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "../sde.hpp"
#include "../stats.hpp"
#include "../twobody.hpp"
#include "config.hpp"
#include "oracles.hpp"
#include "report.hpp"

namespace stochinv::harness {

inline std::vector<std::string> twobody_columns() {
    return {"t",
            "mc_h_mean",       "mc_h_mean_se",    "mc_h_sq_mean",    "mc_h_sq_mean_se",
            "mc_r_sq_mean",    "mc_h_r_sq_mean",
            "mu_h_rate_fd",    "mu_h_rate_fd_se", "mu_h_rate",       "mu_h_rate_lower",
            "mu_h_rate_upper",
            "R_h_rate_fd",     "R_h_rate_fd_se",  "R_h_rate",        "R_h_rate_lower",
            "R_h_rate_upper",
            "min_r_norm",      "mc_paths_used"};
}

namespace detail {

/// Three-point finite difference of per-path values with a per-path
/// standard error. `c` weights samples at three grid points; `mask` marks
/// paths to skip.
inline ScalarSummary fd_point(const std::array<const std::vector<double>*, 3>& y,
                              const std::array<double, 3>& c, double step,
                              const std::vector<std::uint8_t>& mask) {
    std::vector<double> d;
    d.reserve(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) continue;
        d.push_back((c[0] * (*y[0])[i] + c[1] * (*y[1])[i] + c[2] * (*y[2])[i]) / (2.0 * step));
    }
    return summarize(d);
}

}  // namespace detail

/// Monte Carlo study of the squared angular momentum h under a white-noise
/// perturbing acceleration, with its rate estimates set against the bounds.
inline RunReport run_twobody(const ScenarioConfig& cfg) {
    using namespace twobody;
    if (cfg.kind != ScenarioKind::TwoBody) throw ConfigError("run_twobody: scenario is not twobody");

    const SymMat3& q = cfg.noise_cov;
    const double r_min = cfg.effective_r_min();
    const TwoBodyModel model(GravModel(cfg.mu_grav, q, r_min));
    const GaussianBelief<6> initial(Vec6(cfg.initial_mean), SymMat6(Mat6(cfg.initial_cov)));
    const auto grid = TimeGrid::span(cfg.t_final, cfg.dt);
    if (grid.intervals() < 2) throw ConfigError("two-body run needs t_final >= 2 dt");
    const std::size_t n = cfg.n_samples;
    const std::size_t last = grid.size() - 1;
    const bool noisy = q.trace() > 0.0;
    const bool iso = is_isotropic(q) && noisy;

    struct Point {
        double h_mean, h_se, h2_mean, h2_se, r2_mean, hr2_mean;
        double mu_rate, R_rate, min_r;
        RateBounds mu_bounds, R_bounds;
        std::size_t used;
        ScalarSummary fd_h, fd_h2;
    };
    std::vector<Point> pts(grid.size());

    // Per-path h and h^2 at the three most recent grid points.
    std::array<std::vector<double>, 3> hist_h, hist_h2;
    for (auto& v : hist_h) v.assign(n, 0.0);
    for (auto& v : hist_h2) v.assign(n, 0.0);
    std::vector<double> h0(n), r_mu(n), r_R(n);
    double worst_drift = 0.0;

    RateLawCheck mu_law(n), R_law(n);
    RhFactorOracle rh_oracle(iso ? q(0, 0) : 0.0, n);
    std::size_t k = 0;

    propagate_ensemble(
        model, initial, grid, n, cfg.master_seed,
        [&](const Ensemble<6>& e) {
            auto& hk = hist_h[k % 3];
            auto& h2k = hist_h2[k % 3];
            Point& p = pts[k];
            double sr2 = 0.0, shr2 = 0.0;
            Mat3 rr = Mat3::Zero();
            std::vector<double> hv, h2v;
            hv.reserve(n);
            h2v.reserve(n);
            p.min_r = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < n; ++i) {
                if (e.divergent[i]) {
                    mu_law.drop(i);
                    R_law.drop(i);
                    hk[i] = h2k[i] = r_mu[i] = r_R[i] = 0.0;
                    continue;
                }
                auto s = TwoBodyState::from_vector(e.states[i]);
                double h = h_invariant(s).value;
                hk[i] = h;
                h2k[i] = h * h;
                hv.push_back(h);
                h2v.push_back(h * h);
                double r2 = s.r.squaredNorm();
                sr2 += r2;
                shr2 += v_vector(s).squaredNorm();
                rr += s.r * s.r.transpose();
                p.min_r = std::min(p.min_r, std::sqrt(r2));
                r_mu[i] = mu_h_rate_integrand(s.r, q);
                r_R[i] = R_h_rate_integrand(s, q);
                if (k == 0) h0[i] = h;
                if (k == last) {
                    worst_drift = std::max(worst_drift, std::abs(h - h0[i]) / std::max(h0[i], 1e-300));
                }
            }
            p.used = hv.size();
            if (p.used < 2) throw NumericalError("run_twobody: fewer than 2 live paths");
            const auto dn = static_cast<double>(p.used);
            auto sh = summarize(hv), sh2 = summarize(h2v);
            p.h_mean = sh.mean;
            p.h_se = sh.se;
            p.h2_mean = sh2.mean;
            p.h2_se = sh2.se;
            p.r2_mean = sr2 / dn;
            p.hr2_mean = shr2 / dn;
            p.mu_rate = mu_h_rate_exact(SymMat3(Mat3(rr / dn)), q);
            p.mu_bounds = mu_h_rate_bounds(p.r2_mean, q);
            p.R_rate = R_h_rate_exact(e, q, r_min).value;
            p.R_bounds = R_h_rate_bounds(p.hr2_mean, q);

            mu_law.observe(e.time, hk, r_mu);
            R_law.observe(e.time, h2k, r_R);
            if (iso) rh_oracle.observe(e);

            const double st = grid.step();
            if (k >= 2) {
                std::array<const std::vector<double>*, 3> yh{&hist_h[(k - 2) % 3], &hist_h[(k - 1) % 3], &hk};
                std::array<const std::vector<double>*, 3> yh2{&hist_h2[(k - 2) % 3], &hist_h2[(k - 1) % 3], &h2k};
                constexpr std::array<double, 3> central{-1.0, 0.0, 1.0};
                pts[k - 1].fd_h = detail::fd_point(yh, central, st, e.divergent);
                pts[k - 1].fd_h2 = detail::fd_point(yh2, central, st, e.divergent);
                if (k == 2) {
                    constexpr std::array<double, 3> forward{-3.0, 4.0, -1.0};
                    pts[0].fd_h = detail::fd_point(yh, forward, st, e.divergent);
                    pts[0].fd_h2 = detail::fd_point(yh2, forward, st, e.divergent);
                }
                if (k == last) {
                    constexpr std::array<double, 3> backward{1.0, -4.0, 3.0};
                    pts[k].fd_h = detail::fd_point(yh, backward, st, e.divergent);
                    pts[k].fd_h2 = detail::fd_point(yh2, backward, st, e.divergent);
                }
            }
            ++k;
        },
        PropagateOptions{.substeps = cfg.substeps, .workers = cfg.workers});

    RunReport rep;
    rep.name = cfg.name;
    rep.columns = twobody_columns();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const Point& p = pts[i];
        rep.rows.push_back({grid[i], p.h_mean, p.h_se, p.h2_mean, p.h2_se, p.r2_mean, p.hr2_mean,
                            p.fd_h.mean, p.fd_h.se, p.mu_rate, p.mu_bounds.lower, p.mu_bounds.upper,
                            p.fd_h2.mean, p.fd_h2.se, p.R_rate, p.R_bounds.lower, p.R_bounds.upper,
                            p.min_r, static_cast<double>(p.used)});
    }

    // Finite-difference rates against the bounds at interior points. The
    // allowance is 3 SE plus a roundoff floor on the differenced values.
    constexpr double kRoundoff = 1e-12;
    auto fraction_inside = [&](auto&& estimate, auto&& bounds, auto&& scale) {
        std::size_t inside = 0;
        for (std::size_t i = 1; i < last; ++i) {
            const ScalarSummary& fd = estimate(pts[i]);
            double allow = 3.0 * fd.se + kRoundoff * scale(pts[i]) / grid.step();
            if (bounds(pts[i]).contains(fd.mean, allow)) ++inside;
        }
        return static_cast<double>(inside) / static_cast<double>(last - 1);
    };
    const double mu_frac = fraction_inside([](const Point& p) -> const ScalarSummary& { return p.fd_h; },
                                           [](const Point& p) { return p.mu_bounds; },
                                           [](const Point& p) { return p.h_mean; });
    const double R_frac = fraction_inside([](const Point& p) -> const ScalarSummary& { return p.fd_h2; },
                                          [](const Point& p) { return p.R_bounds; },
                                          [](const Point& p) { return p.h2_mean; });
    rep.checks.push_back({"mu_h_fd_within_bounds", mu_frac >= 0.99,
                          num(100.0 * mu_frac) + "% of interior points inside bounds (3 SE), need 99%"});
    rep.checks.push_back({"R_h_fd_within_bounds", R_frac >= 0.99,
                          num(100.0 * R_frac) + "% of interior points inside bounds (3 SE), need 99%"});

    // The ensemble-average rates must sit inside their bounds exactly.
    std::size_t mu_out = 0, R_out = 0;
    for (const auto& p : pts) {
        if (!p.mu_bounds.contains(p.mu_rate, 1e-12 * std::abs(p.mu_bounds.upper))) ++mu_out;
        if (!p.R_bounds.contains(p.R_rate, 1e-12 * std::abs(p.R_bounds.upper))) ++R_out;
    }
    rep.checks.push_back({"mu_h_exact_within_bounds", mu_out == 0,
                          std::to_string(mu_out) + " grid points outside"});
    rep.checks.push_back({"R_h_exact_within_bounds", R_out == 0,
                          std::to_string(R_out) + " grid points outside"});

    if (noisy) {
        auto law_check = [](const char* name, const RateLawCheck& law) {
            auto r = law.result();
            return Check{name, r.within(3.0),
                         "window " + num(r.window) + ": observed " + num(r.observed_rate) +
                             ", predicted " + num(r.predicted_rate) + ", z = " + num(r.z)};
        };
        rep.checks.push_back(law_check("mu_h_rate_law", mu_law));
        rep.checks.push_back(law_check("R_h_rate_law", R_law));
    } else {
        rep.checks.push_back({"h_conserved", worst_drift <= 1e-9,
                              "Q = 0: worst relative change of h along a path " + num(worst_drift)});
    }

    if (iso) {
        const double pq = q(0, 0);
        std::size_t ties = 0, fd_ok = 0;
        for (const auto& p : pts) {
            if (p.mu_bounds.lower == p.mu_bounds.upper && p.R_bounds.lower == p.R_bounds.upper) ++ties;
        }
        for (std::size_t i = 1; i < last; ++i) {
            const Point& p = pts[i];
            double allow = 3.0 * p.fd_h.se + kRoundoff * p.h_mean / grid.step();
            if (std::abs(p.fd_h.mean - 2.0 * pq * p.r2_mean) <= allow) ++fd_ok;
        }
        double frac = static_cast<double>(fd_ok) / static_cast<double>(last - 1);
        rep.checks.push_back({"bounds_tie", ties == pts.size(),
                              std::to_string(ties) + "/" + std::to_string(pts.size()) +
                                  " rows with lower == upper"});
        rep.checks.push_back({"mu_h_isotropic_fd", frac >= 0.99,
                              num(100.0 * frac) + "% of interior points within 3 SE of 2p E|r|^2"});
        rep.checks.push_back(rh_oracle.check());
    }

    rep.add_summary("scenario", "twobody");
    rep.add_summary("samples", std::to_string(n));
    rep.add_summary("master_seed", std::to_string(cfg.master_seed));
    rep.add_summary("grid_points", std::to_string(grid.size()));
    rep.add_summary("r_min", format_real(r_min));
    rep.add_summary("min_r_norm", format_real(std::min_element(pts.begin(), pts.end(), [](auto& a, auto& b) {
                                                  return a.min_r < b.min_r;
                                              })->min_r));
    rep.add_summary("divergent_paths", std::to_string(n - pts.back().used));
    rep.add_summary("mc_h_mean_initial", format_real(pts.front().h_mean));
    rep.add_summary("mc_h_mean_final", format_real(pts.back().h_mean));
    rep.add_summary("mc_h_sq_mean_final", format_real(pts.back().h2_mean));
    rep.add_summary("mu_h_fd_inside_fraction", format_real(mu_frac));
    rep.add_summary("R_h_fd_inside_fraction", format_real(R_frac));
    rep.add_summary("mu_h_exact_outside_bounds", std::to_string(mu_out));
    rep.add_summary("R_h_exact_outside_bounds", std::to_string(R_out));
    rep.add_summary("max_relative_h_change", format_real(worst_drift));
    rep.add_summary("rh_factor_verdict", iso ? rh_oracle.verdict().verdict()
                                             : "not applicable (Q is not p I)");
    return rep;
}

}  // namespace stochinv::harness
