#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sls_robust/controllers.hpp"
#include "sls_robust/error_model.hpp"
#include "sls_robust/lti_model.hpp"
#include "sls_robust/perception.hpp"
#include "sls_robust/reference.hpp"
#include "sls_robust/synthesis.hpp"

namespace sls {

// Schema violation in a config document. `path` is the offending key.
struct ConfigError : std::runtime_error {
    ConfigError(const std::string& key, const std::string& msg)
        : std::runtime_error(key + ": " + msg), path(key) {}
    std::string path;
};

enum class ErrorModelSource {
    Training,  // simulate the PD controller under nominal perception and fit
    Dataset,   // fit from a dataset CSV
    File,      // load an ErrorModel JSON
    Explicit,  // S and eps_e given directly
};

struct ErrorModelConfig {
    ErrorModelSource source = ErrorModelSource::Training;
    std::string path;
    double radius = 2.0;
    double quantile_eps = 1.0;
    double quantile_slope = 0.95;
    double s_hat = 0.0;
    double epsilon_e = 0.0;
};

struct ExperimentConfig {
    QuadrotorParams params;
    double dt = 0.1;
    // Custom discrete plant; the quadrotor hover model when empty. Only
    // synthesize and verify accept a custom plant.
    std::optional<DiscreteLtiSystem> custom_system;

    int horizon = 20;
    ErrorModelConfig error_model;

    double eps_w = 0.05;
    double d_max = 0.0;
    double margin = 1e-3;
    std::optional<double> r0;
    bool robustness_enabled = true;

    CostKind cost = CostKind::QuadraticL1;
    Eigen::VectorXd q_diag;  // defaults to ones(n)
    Eigen::VectorXd r_diag;  // defaults to ones(m)

    SyntheticPerceptionModel perception;  // degradation_factor is the nominal condition
    double degraded_factor = 4.0;
    CircleReference reference;
    PdGains pd;
    bool z_axis_pd = false;

    int runs = 20;
    int steps = 0;  // 0 means one full reference (every lap)
    std::optional<std::uint64_t> seed;

    lp::SolverOptions solver;

    bool quadrotor() const { return !custom_system.has_value(); }
    DiscreteLtiSystem system() const;
    int sim_steps() const { return steps > 0 ? steps : reference.steps(); }
    std::uint64_t require_seed() const;
    // Reference and perception carry the sampling period and dimensions of
    // the plant; call after every override.
    void validate() const;
};

// Defaults for every field.
ExperimentConfig default_config();

// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

// Stable FNV-1a hash of the canonical config document, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

struct RunManifest {
    std::string command;
    std::string tool_version;
    std::string config_hash;
    std::string started_utc;
    std::string finished_utc;
    std::vector<std::string> files;  // relative to the output directory

    void add(const std::string& file);
    nlohmann::json to_json() const;
};

std::string utc_timestamp();
std::string_view tool_version();

}  // namespace sls
