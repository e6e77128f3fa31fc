#pragma once

#include <string>

#include "config.hpp"
#include "oracles.hpp"
#include "report.hpp"
#include "twobody_run.hpp"

namespace stochinv::harness {

struct VerifyOptions {
    std::uint64_t seed = 20240601;
    std::size_t ke_paths = 200'000;   // one-step kinetic-energy oracle
    std::size_t rh_paths = 10'000;    // isotropic two-body oracle
    std::size_t identity_states = 10'000;
    std::size_t third_moment_samples = 10'000'000;
    unsigned workers = 0;
};

/// The isotropic two-body scenario used by the constant-factor oracle.
inline ScenarioConfig isotropic_twobody_config(std::size_t samples, std::uint64_t seed) {
    ScenarioConfig cfg;
    cfg.kind = ScenarioKind::TwoBody;
    cfg.name = "twobody_isotropic";
    cfg.mu_grav = 1.0;
    cfg.noise_cov = SymMat3::scaled_identity(1e-3);
    cfg.initial_mean = Eigen::VectorXd(6);
    cfg.initial_mean << 1.0, 0.0, 0.0, 0.0, 1.0, 0.0;
    cfg.initial_cov = 1e-6 * Eigen::MatrixXd::Identity(6, 6);
    cfg.dt = 0.02;
    cfg.t_final = 10.0;
    cfg.substeps = 10;
    cfg.n_samples = samples;
    cfg.master_seed = seed;
    return cfg;
}

/// Runs every derivation check: both routes to the covariance rate, the
/// kinetic-energy second-moment factor, the isotropic h^2 factor, the
/// two-body identities and the Gaussian third moments.
inline RunReport run_verify_derivations(const VerifyOptions& opt = {}) {
    using namespace rigidbody;
    RunReport rep;
    rep.name = "verify-derivations";

    rep.checks.push_back(check_cov_rate_routes(1000, opt.seed));

    // One step of the torque-driven rigid body from the reference state.
    const InertiaModel inertia({10.0, 12.0, 14.0});
    const SymMat3 q = SymMat3::diagonal({0.005, 0.002, 0.003});
    const GaussianBelief<3> b(Vec3::Constant(0.02), SymMat3::scaled_identity(2e-5));
    KeCorrFactorOracle ke(inertia, q, opt.ke_paths);
    propagate_ensemble(RigidBodyModel(inertia, q), b, TimeGrid(0.0, 0.1, 1), opt.ke_paths,
                       opt.seed + 1, [&](const Ensemble<3>& e) { ke.observe(e); },
                       PropagateOptions{.workers = opt.workers});
    rep.checks.push_back(ke.check());
    rep.add_summary("ke_corr_factor_verdict", ke.verdict().verdict());

    auto cfg = isotropic_twobody_config(opt.rh_paths, opt.seed + 2);
    cfg.workers = opt.workers;
    auto iso = run_twobody(cfg);
    rep.checks.push_back(*iso.find_check("rh_factor"));
    for (const auto& [k, v] : iso.summary) {
        if (k == "rh_factor_verdict") rep.add_summary(k, v);
    }

    for (auto& c : check_identities(opt.identity_states, opt.seed + 3)) rep.checks.push_back(std::move(c));
    rep.checks.push_back(check_third_moments(opt.third_moment_samples, opt.seed + 4));
    return rep;
}

}  // namespace stochinv::harness
