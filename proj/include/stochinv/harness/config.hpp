#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "../errors.hpp"
#include "../linalg.hpp"

namespace stochinv::harness {

enum class ScenarioKind { RigidBody, TwoBody };

/// Everything needed to run one scenario. Loaded from JSON; see README for
/// the schema.
struct ScenarioConfig {
    ScenarioKind kind = ScenarioKind::RigidBody;
    std::string name;

    Vec3 inertia = Vec3::Ones();      // rigid body: principal moments, kg m^2
    double mu_grav = 1.0;             // two body: gravitational parameter
    std::optional<double> r_min;      // two body: default 1e-3 |r0|

    SymMat3 noise_cov;                // diagonal
    Eigen::VectorXd initial_mean;
    Eigen::MatrixXd initial_cov;

    double dt = 0.1;                  // output grid spacing, s
    double t_final = 1.0;
    std::size_t n_samples = 2;
    std::uint64_t master_seed = 0;
    std::size_t substeps = 1;         // SDE steps per grid interval
    unsigned workers = 0;             // 0 = hardware concurrency
    std::filesystem::path output_dir = "out";

    int state_dim() const { return kind == ScenarioKind::RigidBody ? 3 : 6; }
    double effective_r_min() const {
        return r_min.value_or(1e-3 * initial_mean.head<3>().norm());
    }
};

namespace detail {

using nlohmann::json;

inline const json& require(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw ConfigError(std::string("missing required key '") + key + "'");
    return *it;
}

inline double as_number(const json& j, const char* key) {
    if (!j.is_number()) throw ConfigError(std::string("key '") + key + "' must be a number");
    return j.get<double>();
}

inline std::vector<double> as_vector(const json& j, const char* key) {
    if (!j.is_array()) throw ConfigError(std::string("key '") + key + "' must be an array");
    std::vector<double> v;
    for (const auto& x : j) v.push_back(as_number(x, key));
    return v;
}

/// A square matrix given either as nested rows or as a flat list of
/// diagonal entries.
inline Eigen::MatrixXd as_square(const json& j, const char* key, int n) {
    if (!j.is_array()) throw ConfigError(std::string("key '") + key + "' must be an array");
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    bool nested = !j.empty() && j.front().is_array();
    if (!nested) {
        auto d = as_vector(j, key);
        if (static_cast<int>(d.size()) != n) {
            throw ConfigError(std::string("key '") + key + "': expected " + std::to_string(n) +
                              " diagonal entries, got " + std::to_string(d.size()));
        }
        for (int i = 0; i < n; ++i) m(i, i) = d[static_cast<std::size_t>(i)];
        return m;
    }
    if (static_cast<int>(j.size()) != n) {
        throw ConfigError(std::string("key '") + key + "': expected a " + std::to_string(n) + "x" +
                          std::to_string(n) + " matrix, got " + std::to_string(j.size()) + " rows");
    }
    for (int i = 0; i < n; ++i) {
        auto row = as_vector(j[static_cast<std::size_t>(i)], key);
        if (static_cast<int>(row.size()) != n) {
            throw ConfigError(std::string("key '") + key + "': row " + std::to_string(i) +
                              " has " + std::to_string(row.size()) + " entries, expected " +
                              std::to_string(n));
        }
        for (int k = 0; k < n; ++k) m(i, k) = row[static_cast<std::size_t>(k)];
    }
    return m;
}

}  // namespace detail

inline ScenarioConfig parse_config(const nlohmann::json& j) {
    using detail::as_number;
    using detail::require;
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");

    ScenarioConfig cfg;
    auto kind = require(j, "scenario");
    if (kind == "rigidbody") {
        cfg.kind = ScenarioKind::RigidBody;
    } else if (kind == "twobody") {
        cfg.kind = ScenarioKind::TwoBody;
    } else {
        throw ConfigError("key 'scenario' must be \"rigidbody\" or \"twobody\"");
    }
    cfg.name = j.value("name", std::string(kind));
    const int n = cfg.state_dim();

    if (cfg.kind == ScenarioKind::RigidBody) {
        auto& jj = require(j, "inertia");
        Eigen::MatrixXd inertia = detail::as_square(jj, "inertia", 3);
        if (!inertia.isDiagonal(0.0)) {
            throw ConfigError("key 'inertia': body axes must be principal (diagonal inertia)");
        }
        cfg.inertia = inertia.diagonal();
        if ((cfg.inertia.array() <= 0.0).any()) {
            throw ConfigError("key 'inertia': principal moments must be positive");
        }
    } else {
        cfg.mu_grav = as_number(require(j, "mu_grav"), "mu_grav");
        if (!(cfg.mu_grav > 0.0)) throw ConfigError("key 'mu_grav' must be positive");
        if (j.contains("r_min")) cfg.r_min = as_number(j["r_min"], "r_min");
    }

    Eigen::MatrixXd q = detail::as_square(require(j, "noise_cov"), "noise_cov", 3);
    if (!q.isDiagonal(0.0)) {
        throw ConfigError(
            "key 'noise_cov': noise channels are assumed independent, so Q must be diagonal");
    }
    if ((q.diagonal().array() < 0.0).any()) {
        throw ConfigError("key 'noise_cov': variances must be nonnegative");
    }
    cfg.noise_cov = SymMat3(Mat3(q));

    auto mean = detail::as_vector(require(j, "initial_mean"), "initial_mean");
    if (static_cast<int>(mean.size()) != n) {
        throw ConfigError("key 'initial_mean': expected " + std::to_string(n) + " entries, got " +
                          std::to_string(mean.size()));
    }
    cfg.initial_mean = Eigen::Map<Eigen::VectorXd>(mean.data(), n);
    cfg.initial_cov = detail::as_square(require(j, "initial_cov"), "initial_cov", n);
    if ((cfg.initial_cov - cfg.initial_cov.transpose()).cwiseAbs().maxCoeff() > 0.0) {
        throw ConfigError("key 'initial_cov' must be symmetric");
    }
    if ((cfg.initial_cov.diagonal().array() < 0.0).any()) {
        throw ConfigError("key 'initial_cov': variances must be nonnegative");
    }
    {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cfg.initial_cov);
        double scale = std::max(1e-300, cfg.initial_cov.cwiseAbs().maxCoeff());
        if (es.eigenvalues().minCoeff() < -1e-12 * scale) {
            throw ConfigError("key 'initial_cov' must be positive semidefinite");
        }
    }

    cfg.dt = as_number(require(j, "dt"), "dt");
    cfg.t_final = as_number(require(j, "t_final"), "t_final");
    if (!(cfg.dt > 0.0)) throw ConfigError("key 'dt' must be positive");
    if (!(cfg.t_final >= cfg.dt)) throw ConfigError("key 't_final' must be at least dt");
    double ratio = cfg.t_final / cfg.dt;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
        throw ConfigError("key 't_final' must be an integer multiple of dt");
    }

    auto samples = require(j, "n_samples");
    if (!samples.is_number_integer() || samples.get<long long>() < 2) {
        throw ConfigError("key 'n_samples' must be an integer >= 2");
    }
    cfg.n_samples = samples.get<std::size_t>();
    auto seed = require(j, "master_seed");
    if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<long long>() >= 0)) {
        throw ConfigError("key 'master_seed' must be a nonnegative integer");
    }
    cfg.master_seed = seed.get<std::uint64_t>();

    if (j.contains("substeps")) {
        if (!j["substeps"].is_number_integer() || j["substeps"].get<long long>() < 1) {
            throw ConfigError("key 'substeps' must be an integer >= 1");
        }
        cfg.substeps = j["substeps"].get<std::size_t>();
    }
    if (j.contains("workers")) {
        if (!j["workers"].is_number_integer() || j["workers"].get<long long>() < 0) {
            throw ConfigError("key 'workers' must be a nonnegative integer");
        }
        cfg.workers = j["workers"].get<unsigned>();
    }
    if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
    if (cfg.kind == ScenarioKind::TwoBody && cfg.initial_mean.head<3>().norm() == 0.0 &&
        !cfg.r_min) {
        throw ConfigError("two-body initial position mean must be nonzero");
    }
    return cfg;
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("cannot parse " + path.string() + ": " + e.what());
    }
    return parse_config(j);
}

}  // namespace stochinv::harness
