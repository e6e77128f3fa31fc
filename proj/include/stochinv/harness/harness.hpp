#pragma once

#include <filesystem>

#include "config.hpp"
#include "oracles.hpp"
#include "report.hpp"
#include "rigidbody_run.hpp"
#include "twobody_run.hpp"
#include "verify.hpp"

namespace stochinv::harness {

inline RunReport run_scenario(const ScenarioConfig& cfg) {
    return cfg.kind == ScenarioKind::RigidBody ? run_rigidbody(cfg) : run_twobody(cfg);
}

struct RunArtifacts {
    std::filesystem::path csv;
    std::filesystem::path summary;
};

/// Writes <dir>/<name>.csv and <dir>/<name>_summary.txt.
inline RunArtifacts write_report(const RunReport& rep, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    RunArtifacts out{dir / (rep.name + ".csv"), dir / (rep.name + "_summary.txt")};
    write_csv(rep, out.csv);
    write_summary(rep, out.summary);
    return out;
}

}  // namespace stochinv::harness
