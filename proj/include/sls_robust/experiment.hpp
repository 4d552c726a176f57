#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sls_robust/config.hpp"
#include "sls_robust/simulate.hpp"
#include "sls_robust/synthesis.hpp"

namespace sls {

// Error model as the config asks for it: fitted on a PD training flight,
// fitted from a dataset file, loaded, or taken verbatim.
ErrorModel resolve_error_model(const ExperimentConfig& cfg);

// Training flight used by the "training" error-model source.
SimLog training_flight(const ExperimentConfig& cfg, std::uint64_t seed);

SynthesisProblem make_problem(const ExperimentConfig& cfg, const ErrorModel& em);
SimSetup make_setup(const ExperimentConfig& cfg);

// Simulation controller for synthesized responses, with the PD thrust
// channel mixed in when the config asks for it.
std::unique_ptr<Controller> make_feedback(const ExperimentConfig& cfg, const SystemResponses& resp,
                                          const std::string& name);

enum class Condition { Nominal, Degraded };
std::string_view to_string(Condition c);

struct RunResult {
    std::uint64_t seed = 0;
    MetricsSummary metrics;
};

struct CellReport {
    Condition condition = Condition::Nominal;
    double degradation_factor = 1.0;
    std::vector<RunResult> runs;  // in seed order
    double mean_max_e = 0.0;
    double mean_rmse = 0.0;
    bool all_bounds_satisfied = true;
    SimLog first_log;  // log of the first seed, for the figure files
};

struct ControllerReport {
    std::string name;
    std::string status = "ok";  // ok, infeasible, solver-failure, aborted
    std::string message;
    std::optional<GuaranteeReport> guarantee;
    std::optional<InfeasibilityDiagnostic> diagnostic;
    std::vector<CellReport> cells;  // nominal then degraded; empty on failure
};

struct ExperimentReport {
    ErrorModel error_model;
    std::vector<ControllerReport> controllers;  // pd, nominal_l1, robust_quadratic, robust_imitation
    std::vector<std::uint64_t> seeds;
    double dt = 0.0;
};

// Parallelism honours SLS_ROBUST_THREADS; results do not depend on it.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

struct Artifact {
    std::string file;
    std::string content;
};

// summary.json, runs.csv and per-condition figure tables (tracking.csv and
// the smoothed error norm with the bound line), in a fixed order.
std::vector<Artifact> experiment_artifacts(const ExperimentReport& report, double smoothing_time_constant = 1.0);

// Worker count: hardware concurrency capped by SLS_ROBUST_THREADS.
unsigned worker_count();

// Runs task(i) for i in [0, count) on up to `workers` threads.
void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& task);

}  // namespace sls
