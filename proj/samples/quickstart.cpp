// Propagate a noisy rigid body two ways and compare kinetic-energy moments:
// a Monte Carlo ensemble and the Gaussian-closure moment equations.

#include <cmath>
#include <cstdio>

#include <stochinv/rigidbody.hpp>
#include <stochinv/sde.hpp>
#include <stochinv/stats.hpp>

int main() {
    using namespace stochinv;
    using namespace stochinv::rigidbody;

    const InertiaModel inertia({10.0, 12.0, 14.0});
    const SymMat3 q = SymMat3::diagonal({0.005, 0.002, 0.003});
    const GaussianBelief<3> w0(Vec3::Constant(0.02), SymMat3::scaled_identity(2e-5));
    const auto grid = TimeGrid::span(20.0, 0.1);

    auto moments = propagate_moments(RigidBodyMoments::from_belief(w0, inertia), inertia, q, grid);

    InvariantFn<3> ke;
    ke.value = [&](const Vec3& w) { return kinetic_energy(w, inertia).value; };

    std::printf("%6s %12s %12s %10s %12s %12s %10s\n", "t", "E[U] mc", "E[U] ode", "se",
                "var[U] mc", "var[U] ode", "se");
    std::size_t k = 0;
    bool ok = true;
    propagate_ensemble(RigidBodyModel(inertia, q), w0, grid, 4000, 7, [&](const Ensemble<3>& e) {
        const auto& m = moments[k++];
        if ((k - 1) % 40 != 0) return;
        auto s = ensemble_stats(e, &ke);
        std::printf("%6.1f %12.6g %12.6g %10.2g %12.6g %12.6g %10.2g\n", e.time, s.u1, m.ke_mean,
                    s.u1_se, s.u_var, m.ke_cov, s.u_var_se);
        ok = ok && std::abs(s.u1 - m.ke_mean) < 4.0 * s.u1_se + 1e-12;
    });
    std::printf("d/dt E[U] = tr(J^-1 Q)/2 = %.6g J/s\n", ke_mean_rate(inertia, q));
    return ok ? 0 : 1;
}
