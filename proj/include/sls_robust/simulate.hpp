#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sls_robust/controllers.hpp"
#include "sls_robust/error_model.hpp"
#include "sls_robust/fir.hpp"
#include "sls_robust/lti_model.hpp"
#include "sls_robust/perception.hpp"
#include "sls_robust/reference.hpp"

namespace sls {

// One column per step.
struct SimLog {
    std::vector<double> times;
    Eigen::MatrixXd x;
    Eigen::MatrixXd x_ref;
    Eigen::MatrixXd y;
    Eigen::MatrixXd u;
    Eigen::MatrixXd e;
    std::vector<double> e_norm;

    std::size_t size() const { return times.size(); }
    void validate() const;
};

struct SimulationAborted : std::runtime_error {
    SimulationAborted(const std::string& what, int step_index, SimLog partial)
        : std::runtime_error(what), step(step_index), log(std::move(partial)) {}
    int step;
    SimLog log;
};

struct SimSetup {
    DiscreteLtiSystem sys;
    QuadrotorParams params;
    CircleReference reference;
    SyntheticPerceptionModel perception;
    double eps_w = 0.0;
    std::optional<Eigen::VectorXd> x0;  // defaults to the first reference state
};

// x_{k+1} = A x_k + B (u_k - trim) + H w_k with w_k uniform in [-eps_w, eps_w],
// u_k = u_ff_k + controller(y_k - x_ref_k). Deterministic in `seed`.
SimLog simulate(const SimSetup& setup, Controller& controller, int steps, std::uint64_t seed);

// Closed loop around the origin with a unit kick in one channel at k = 0:
// a state kick (H w_0 = e_j) or a perception error (e_0 = e_j). Returns the
// measured responses for k = 1..horizon.
SystemResponses closed_loop_impulse(const DiscreteLtiSystem& sys, Controller& controller, int horizon);

// Ground truth and measurements of a log as an error-model training set.
TrajectoryDataset dataset_from_log(const SimLog& log);

struct MetricsSummary {
    double rmse_position = 0.0;
    double max_e = 0.0;
    double mean_e = 0.0;
    std::optional<double> gamma;
    bool bound_satisfied = true;
};

MetricsSummary metrics(const SimLog& log, std::optional<double> gamma);

// Causal moving average over ceil(time_constant / dt) samples, averaging
// the available samples at the start.
std::vector<double> smooth(const std::vector<double>& series, double dt, double time_constant);

}  // namespace sls
