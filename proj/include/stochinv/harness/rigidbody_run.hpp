#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "../rigidbody.hpp"
#include "../sde.hpp"
#include "../stats.hpp"
#include "config.hpp"
#include "oracles.hpp"
#include "report.hpp"

namespace stochinv::harness {

inline std::vector<std::string> rigidbody_columns() {
    std::vector<std::string> c{"t"};
    auto add_moments = [&](const std::string& p) {
        for (const char* s : {"w1", "w2", "w3"}) c.push_back(p + s);
        for (const char* s : {"S11", "S12", "S13", "S22", "S23", "S33"}) c.push_back(p + s);
        for (const char* s : {"ke_mean", "ke_var", "ke_second_moment"}) c.push_back(p + s);
    };
    add_moments("an_");
    add_moments("mc_");
    for (const char* s : {"w1", "w2", "w3", "ke_mean", "ke_var"}) c.push_back(std::string("mc_") + s + "_se");
    for (const char* s : {"w1", "w2", "w3", "ke"}) {
        c.push_back(std::string("mc_") + s + "_lo");
        c.push_back(std::string("mc_") + s + "_hi");
    }
    c.push_back("mc_paths_used");
    return c;
}

namespace detail {

inline void push_sym(std::vector<double>& row, const SymMat3& s) {
    for (auto [i, j] : {std::pair{0, 0}, {0, 1}, {0, 2}, {1, 1}, {1, 2}, {2, 2}}) row.push_back(s(i, j));
}

/// |a - b| / se, with se = 0 treated as "exact agreement required".
inline double normalized_gap(double a, double b, double se) {
    double d = std::abs(a - b);
    if (se > 0.0) return d / se;
    return d == 0.0 ? 0.0 : INFINITY;
}

}  // namespace detail

/// Monte Carlo ensemble and moment equations side by side for the
/// torque-driven rigid body.
inline RunReport run_rigidbody(const ScenarioConfig& cfg) {
    using namespace rigidbody;
    if (cfg.kind != ScenarioKind::RigidBody) throw ConfigError("run_rigidbody: scenario is not rigidbody");

    const InertiaModel inertia(cfg.inertia);
    const RigidBodyModel model(inertia, cfg.noise_cov);
    const GaussianBelief<3> initial(Vec3(cfg.initial_mean), SymMat3(Mat3(cfg.initial_cov)));
    const auto grid = TimeGrid::span(cfg.t_final, cfg.dt);
    const std::size_t n = cfg.n_samples;

    const auto analytic =
        propagate_moments(RigidBodyMoments::from_belief(initial, inertia), inertia, cfg.noise_cov, grid);

    // Per-path least-squares slope of U_K on t: sum (t - tbar) U / Sxx.
    double tbar = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) tbar += grid[k];
    tbar /= static_cast<double>(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) sxx += (grid[k] - tbar) * (grid[k] - tbar);
    std::vector<double> slope_acc(n, 0.0);

    // Leading Euler-Maruyama energy bias: one step adds h^2 f^T J f / 2 to U_K.
    const double h = grid.step() / static_cast<double>(cfg.substeps);
    double em_bias_rate = 0.0;

    InvariantFn<3> ke;
    ke.value = [&](const Vec3& w) { return kinetic_energy(w, inertia).value; };
    KeCorrFactorOracle ke_oracle(inertia, cfg.noise_cov, n);
    std::vector<MomentEntry<3>> mc;
    mc.reserve(grid.size());
    std::vector<std::uint8_t> final_divergent;
    std::size_t k = 0;

    propagate_ensemble(
        model, initial, grid, n, cfg.master_seed,
        [&](const Ensemble<3>& e) {
            mc.push_back(ensemble_stats(e, &ke));
            const double tc = e.time - tbar;
            double bias = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (e.divergent[i]) continue;
                const Vec3& w = e.states[i];
                slope_acc[i] += tc * kinetic_energy(w, inertia).value;
                Vec3 f = euler_drift(w, inertia);
                bias += f.dot(inertia.principal().cwiseProduct(f));
            }
            em_bias_rate = std::max(em_bias_rate, 0.5 * h * bias / static_cast<double>(mc.back().samples));
            if (k <= 1) ke_oracle.observe(e);
            if (k + 1 == grid.size()) final_divergent = e.divergent;
            ++k;
        },
        PropagateOptions{.substeps = cfg.substeps, .workers = cfg.workers});

    RunReport rep;
    rep.name = cfg.name;
    rep.columns = rigidbody_columns();
    rep.rows.reserve(grid.size());
    double max_z_w = 0.0, max_z_ke = 0.0, max_z_var = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto& a = analytic[i];
        const auto& m = mc[i];
        std::vector<double> row{grid[i]};
        row.insert(row.end(), a.mean.data(), a.mean.data() + 3);
        detail::push_sym(row, a.cov);
        row.insert(row.end(), {a.ke_mean, a.ke_cov, a.ke_corr});
        row.insert(row.end(), m.mean.data(), m.mean.data() + 3);
        detail::push_sym(row, m.cov);
        row.insert(row.end(), {m.u1, m.u_var, m.u2});
        row.insert(row.end(), m.mean_se.data(), m.mean_se.data() + 3);
        row.insert(row.end(), {m.u1_se, m.u_var_se});
        Vec3 lo = m.band_lo(), hi = m.band_hi();
        for (int c = 0; c < 3; ++c) row.insert(row.end(), {lo(c), hi(c)});
        row.insert(row.end(), {m.u_band_lo(), m.u_band_hi(), static_cast<double>(m.samples)});
        rep.rows.push_back(std::move(row));

        for (int c = 0; c < 3; ++c) {
            max_z_w = std::max(max_z_w, detail::normalized_gap(m.mean(c), a.mean(c), m.mean_se(c)));
        }
        max_z_ke = std::max(max_z_ke, detail::normalized_gap(m.u1, a.ke_mean, m.u1_se));
        max_z_var = std::max(max_z_var, detail::normalized_gap(m.u_var, a.ke_cov, m.u_var_se));
    }

    // Kinetic-energy mean: sample slope against tr(J^-1 Q)/2.
    const double rate = ke_mean_rate(inertia, cfg.noise_cov);
    std::vector<double> slopes;
    for (std::size_t i = 0; i < n; ++i) {
        if (!final_divergent[i]) slopes.push_back(slope_acc[i] / sxx);
    }
    auto ss = summarize(slopes);
    const double slope_tol = 3.0 * ss.se + em_bias_rate;
    rep.checks.push_back({"ke_mean_slope", std::abs(ss.mean - rate) <= slope_tol,
                          "MC slope " + num(ss.mean) + " +/- " + num(ss.se) + " vs tr(J^-1 Q)/2 = " +
                              num(rate) + " (allowance 3 SE + EM bias " + num(em_bias_rate) + ")"});

    double lin_worst = 0.0, lin_scale = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        lin_worst = std::max(lin_worst,
                             std::abs(analytic[i].ke_mean - (analytic[0].ke_mean + rate * grid[i])));
        lin_scale = std::max(lin_scale, std::abs(analytic[i].ke_mean));
    }
    rep.checks.push_back({"ke_mean_linear", lin_worst <= 1e-12 * std::max(lin_scale, 1e-300),
                          "max residual from mu_K(0) + rate t: " + num(lin_worst)});

    // Kinetic-energy variance at 11 evenly spaced checkpoints.
    std::size_t inside = 0, checkpoints = 0;
    double worst_z = 0.0;
    for (int c = 0; c <= 10; ++c) {
        auto idx = static_cast<std::size_t>(
            std::llround(static_cast<double>(c) * static_cast<double>(grid.intervals()) / 10.0));
        const auto& m = mc[idx];
        double z = detail::normalized_gap(m.u_var, analytic[idx].ke_cov, m.u_var_se);
        if (m.u_var_se == 0.0 &&
            std::abs(m.u_var - analytic[idx].ke_cov) <= 1e-12 * std::max(m.u_var, 1e-300)) {
            z = 0.0;
        }
        worst_z = std::max(worst_z, z);
        ++checkpoints;
        if (z <= 3.0) ++inside;
    }
    rep.checks.push_back({"ke_var_checkpoints", inside == checkpoints,
                          std::to_string(inside) + "/" + std::to_string(checkpoints) +
                              " checkpoints within 3 SE, worst |z| = " + num(worst_z)});

    rep.checks.push_back(ke_oracle.check());

    const auto& af = analytic.back();
    const auto& mf = mc.back();
    rep.add_summary("scenario", "rigidbody");
    rep.add_summary("samples", std::to_string(n));
    rep.add_summary("master_seed", std::to_string(cfg.master_seed));
    rep.add_summary("grid_points", std::to_string(grid.size()));
    rep.add_summary("divergent_paths", std::to_string(n - slopes.size()));
    rep.add_summary("final_time", format_real(grid.back()));
    rep.add_summary("an_ke_mean_final", format_real(af.ke_mean));
    rep.add_summary("an_ke_mean_increase", format_real(af.ke_mean - analytic[0].ke_mean));
    rep.add_summary("an_ke_var_final", format_real(af.ke_cov));
    rep.add_summary("mc_ke_mean_final", format_real(mf.u1));
    rep.add_summary("mc_ke_var_final", format_real(mf.u_var));
    rep.add_summary("ke_mean_rate", format_real(rate));
    rep.add_summary("mc_ke_slope", format_real(ss.mean));
    rep.add_summary("mc_ke_slope_se", format_real(ss.se));
    rep.add_summary("max_normalized_deviation_w", format_real(max_z_w));
    rep.add_summary("max_normalized_deviation_ke_mean", format_real(max_z_ke));
    rep.add_summary("max_normalized_deviation_ke_var", format_real(max_z_var));
    rep.add_summary("ke_corr_factor_verdict",
                    ke_oracle.applicable() ? ke_oracle.verdict().verdict() : "not applicable");
    return rep;
}

}  // namespace stochinv::harness
