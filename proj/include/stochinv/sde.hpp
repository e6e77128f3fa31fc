#pragma once

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <exception>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "gaussian.hpp"
#include "linalg.hpp"
#include "rng.hpp"

namespace stochinv {

/// dx = f(t, x) dt + g(t, x) dB,  dB ~ N(0, Q dt).
template <typename M>
concept SdeModel = requires(const M& m, double t, const Vec<M::state_dim>& x) {
    { M::state_dim } -> std::convertible_to<int>;
    { M::noise_dim } -> std::convertible_to<int>;
    { m.drift(t, x) } -> std::convertible_to<Vec<M::state_dim>>;
    { m.diffusion(t, x) } -> std::convertible_to<Eigen::Matrix<double, M::state_dim, M::noise_dim>>;
    { m.noise_cov() } -> std::convertible_to<SymMat<M::noise_dim>>;
};

/// Model assembled from callables; convenient for tests and small problems.
template <int N, int M>
struct FunctionModel {
    static constexpr int state_dim = N;
    static constexpr int noise_dim = M;
    using DiffusionMatrix = Eigen::Matrix<double, N, M>;

    std::function<Vec<N>(double, const Vec<N>&)> f;
    std::function<DiffusionMatrix(double, const Vec<N>&)> g;
    SymMat<M> q;

    Vec<N> drift(double t, const Vec<N>& x) const { return f(t, x); }
    DiffusionMatrix diffusion(double t, const Vec<N>& x) const { return g(t, x); }
    const SymMat<M>& noise_cov() const { return q; }
};

/// dx = dB: pure Brownian motion in N dimensions.
template <int N>
FunctionModel<N, N> brownian_model(const SymMat<N>& q) {
    return {[](double, const Vec<N>&) { return Vec<N>::Zero().eval(); },
            [](double, const Vec<N>&) { return Mat<N>::Identity().eval(); }, q};
}

/// Models may supply their own first-order step(t, x, dt, dB); otherwise
/// the engine uses em_step.
template <typename M>
concept HasCustomStep = requires(const M& m, double t, const Vec<M::state_dim>& x,
                                 const Vec<M::noise_dim>& db) {
    { m.step(t, x, t, db) } -> std::convertible_to<Vec<M::state_dim>>;
};

/// A path is divergent once any component is non-finite or exceeds this.
inline constexpr double kDivergenceThreshold = 1e12;

template <int N>
bool is_divergent(const Vec<N>& x) {
    return !x.allFinite() || x.cwiseAbs().maxCoeff() > kDivergenceThreshold;
}

/// One Euler-Maruyama step: x + f(t,x) dt + g(t,x) dB.
template <SdeModel Model>
Vec<Model::state_dim> em_step(const Model& model, double t, const Vec<Model::state_dim>& x,
                              double dt, const Vec<Model::noise_dim>& db) {
    if (!(dt > 0.0)) throw std::invalid_argument("em_step: dt must be positive");
    return x + model.drift(t, x) * dt + model.diffusion(t, x) * db;
}

/// Uniform time grid t_k = t0 + k * step, k = 0..intervals.
class TimeGrid {
public:
    TimeGrid(double t0, double step, std::size_t intervals)
        : t0_(t0), step_(step), intervals_(intervals) {
        if (!(step > 0.0)) throw std::invalid_argument("TimeGrid: step must be positive");
    }

    /// Grid covering [0, t_final]; t_final must be an integer multiple of step
    /// up to roundoff.
    static TimeGrid span(double t_final, double step) {
        if (!(step > 0.0)) throw std::invalid_argument("TimeGrid: step must be positive");
        double ratio = t_final / step;
        auto n = static_cast<std::size_t>(std::llround(ratio));
        if (std::abs(ratio - static_cast<double>(n)) > 1e-9 * std::max(1.0, ratio)) {
            throw std::invalid_argument("TimeGrid: t_final is not a multiple of the step");
        }
        return TimeGrid(0.0, step, n);
    }

    std::size_t size() const { return intervals_ + 1; }
    std::size_t intervals() const { return intervals_; }
    double step() const { return step_; }
    double operator[](std::size_t k) const { return t0_ + static_cast<double>(k) * step_; }
    double back() const { return (*this)[intervals_]; }

private:
    double t0_;
    double step_;
    std::size_t intervals_;
};

/// States of all Monte Carlo paths at one instant.
template <int N>
struct Ensemble {
    double time = 0.0;
    std::vector<Vec<N>> states;
    std::vector<std::uint8_t> divergent;  // one flag per path
    std::uint64_t master_seed = 0;

    std::size_t size() const { return states.size(); }
    std::size_t divergent_count() const {
        return static_cast<std::size_t>(std::count(divergent.begin(), divergent.end(), 1));
    }
};

struct PropagateOptions {
    /// Euler-Maruyama steps per grid interval.
    std::size_t substeps = 1;
    /// Worker threads; 0 picks hardware concurrency.
    unsigned workers = 0;
    /// Abort once more than this fraction of paths has diverged.
    double max_divergent_fraction = 1e-3;
};

namespace detail {

inline unsigned resolve_workers(unsigned requested, std::size_t paths) {
    unsigned w = requested == 0 ? std::max(1u, std::thread::hardware_concurrency()) : requested;
    return static_cast<unsigned>(std::min<std::size_t>(w, std::max<std::size_t>(1, paths)));
}

/// Runs body(begin, end) over contiguous index blocks. Exceptions from any
/// worker are rethrown on the calling thread (first by block order).
template <typename Body>
void parallel_blocks(std::size_t count, unsigned workers, Body&& body) {
    if (workers <= 1 || count < 2) {
        body(std::size_t{0}, count);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> threads;
    threads.reserve(workers);
    std::size_t chunk = (count + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        std::size_t begin = std::min(count, w * chunk);
        std::size_t end = std::min(count, begin + chunk);
        threads.emplace_back([&, w, begin, end] {
            try {
                body(begin, end);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace detail

/// Monte Carlo propagation of an SDE from a Gaussian initial belief.
///
/// Path i owns RngStream(master_seed, i): it first draws its initial state,
/// then one increment per Euler-Maruyama step. `visit` is called on the
/// calling thread with the ensemble at every grid point, in time order.
/// Results are independent of the worker count.
template <SdeModel Model, typename Visitor>
    requires std::invocable<Visitor&, const Ensemble<Model::state_dim>&>
void propagate_ensemble(const Model& model, const GaussianBelief<Model::state_dim>& initial,
                        const TimeGrid& grid, std::size_t n_paths, std::uint64_t master_seed,
                        Visitor&& visit, const PropagateOptions& opts = {}) {
    constexpr int N = Model::state_dim;
    constexpr int M = Model::noise_dim;
    if (n_paths < 2) throw std::invalid_argument("propagate_ensemble: need at least 2 paths");
    if (opts.substeps < 1) throw std::invalid_argument("propagate_ensemble: substeps must be >= 1");

    const SymMat<M> q = model.noise_cov();
    if (!q.is_diagonal() || (q.diag().array() < 0.0).any()) {
        throw std::invalid_argument(
            "propagate_ensemble: noise covariance must be diagonal with nonnegative entries");
    }
    const double h = grid.step() / static_cast<double>(opts.substeps);
    const Vec<M> noise_scale = (q.diag() * h).cwiseSqrt();
    const Mat<N> factor = psd_factor(initial.cov());

    Ensemble<N> ens;
    ens.time = grid[0];
    ens.master_seed = master_seed;
    ens.states.resize(n_paths);
    ens.divergent.assign(n_paths, 0);

    std::vector<RngStream> streams;
    streams.reserve(n_paths);
    for (std::size_t i = 0; i < n_paths; ++i) streams.emplace_back(master_seed, i);

    const unsigned workers = detail::resolve_workers(opts.workers, n_paths);
    detail::parallel_blocks(n_paths, workers, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            ens.states[i] = initial.mean() + factor * streams[i].template normal_vec<N>();
        }
    });

    auto check_divergence = [&] {
        std::size_t bad = ens.divergent_count();
        if (static_cast<double>(bad) > opts.max_divergent_fraction * static_cast<double>(n_paths)) {
            throw NumericalError("propagate_ensemble: " + std::to_string(bad) + " of " +
                                 std::to_string(n_paths) + " paths diverged by t = " +
                                 std::to_string(ens.time));
        }
    };

    visit(std::as_const(ens));
    for (std::size_t k = 1; k < grid.size(); ++k) {
        const double t_start = grid[k - 1];
        detail::parallel_blocks(n_paths, workers, [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                if (ens.divergent[i]) continue;
                Vec<N> x = ens.states[i];
                for (std::size_t s = 0; s < opts.substeps; ++s) {
                    Vec<M> db = noise_scale.cwiseProduct(streams[i].template normal_vec<M>());
                    const double ts = t_start + static_cast<double>(s) * h;
                    if constexpr (HasCustomStep<Model>) {
                        x = model.step(ts, x, h, db);
                    } else {
                        x = em_step(model, ts, x, h, db);
                    }
                    if (is_divergent(x)) {
                        ens.divergent[i] = 1;
                        break;
                    }
                }
                ens.states[i] = x;
            }
        });
        ens.time = grid[k];
        check_divergence();
        visit(std::as_const(ens));
    }
}

/// Convenience overload that keeps every snapshot. Memory grows as
/// grid size x paths; meant for small runs.
template <SdeModel Model>
std::vector<Ensemble<Model::state_dim>> propagate_ensemble(
    const Model& model, const GaussianBelief<Model::state_dim>& initial, const TimeGrid& grid,
    std::size_t n_paths, std::uint64_t master_seed, const PropagateOptions& opts = {}) {
    std::vector<Ensemble<Model::state_dim>> out;
    out.reserve(grid.size());
    propagate_ensemble(
        model, initial, grid, n_paths, master_seed,
        [&](const Ensemble<Model::state_dim>& e) { out.push_back(e); }, opts);
    return out;
}

}  // namespace stochinv
