#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

namespace sls {

// Ground-truth states and perception outputs sampled along a trajectory.
// Column k of `states` / `measurements` is sample k.
struct TrajectoryDataset {
    std::vector<double> times;
    Eigen::MatrixXd states;
    Eigen::MatrixXd measurements;

    std::size_t size() const { return times.size(); }
    void validate() const;
};

struct ErrorModel {
    double epsilon_e = 0.0;      // bound on ||e||_inf at quantile_eps
    double s_hat = 0.0;          // S-slope at quantile_slope
    double s_hat_max = 0.0;      // S-slope over every admissible pair
    double radius_r = 1.0;
    double quantile_eps = 1.0;
    double quantile_slope = 0.95;
    std::size_t pair_count = 0;  // admissible pairs behind s_hat
    Eigen::MatrixXd training_states;

    void validate() const;
};

struct SlopeOptions {
    // Above this many samples the scan uses an evenly strided subsample.
    std::size_t max_points = 5000;
};

// Nearest-rank quantile: the ceil(q * N)-th smallest value, q in (0, 1].
double nearest_rank_quantile(std::vector<double> values, double q);

// e_k = y_k - C x_k, one column per sample.
Eigen::MatrixXd residuals(const TrajectoryDataset& data, const Eigen::MatrixXd& C);

double epsilon_bound(const Eigen::MatrixXd& residuals, double quantile);

// Quantile of ||e_i - e_j|| / ||x_i - x_j|| over distinct pairs closer than r
// (inf-norm). Empty when no such pair exists.
std::optional<double> s_slope(const Eigen::MatrixXd& states, const Eigen::MatrixXd& residuals, double radius,
                              double quantile, const SlopeOptions& options = {});
std::optional<double> s_slope(const TrajectoryDataset& data, const Eigen::MatrixXd& C, double radius,
                              double quantile, const SlopeOptions& options = {});

// Throws NoNeighborsError when the radius admits no pair.
ErrorModel fit(const TrajectoryDataset& data, const Eigen::MatrixXd& C, double radius, double quantile_eps,
               double quantile_slope, const SlopeOptions& options = {});

}  // namespace sls
