#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace sls {

// y = C x + b(x) + eta with b_i(x) = amp_i sin(freq_i <dir_i, x> + phase_i)
// and eta uniform in [-a, a], a = noise_amplitude * degradation_factor.
struct SyntheticPerceptionModel {
    Eigen::VectorXd bias_amplitudes;   // p
    Eigen::VectorXd bias_frequencies;  // p
    Eigen::MatrixXd directions;        // p x n, row i is dir_i
    Eigen::VectorXd phases;            // p
    double noise_amplitude = 0.0;
    double degradation_factor = 1.0;
    std::uint64_t seed = 0;

    void validate(Eigen::Index n, Eigen::Index p) const;
    // Lipschitz constant of b in the inf-norm: max_i amp_i freq_i |dir_i|_1.
    double lipschitz() const;
    double noise_bound() const { return noise_amplitude * degradation_factor; }
    // Bound on |y - C x|_inf.
    double error_bound() const;
};

Eigen::VectorXd perception_bias(const SyntheticPerceptionModel& model, const Eigen::VectorXd& x);

// Deterministic in (model.seed, k).
Eigen::VectorXd perception_noise(const SyntheticPerceptionModel& model, Eigen::Index p, std::int64_t k);

Eigen::VectorXd perceive(const SyntheticPerceptionModel& model, const Eigen::MatrixXd& C, const Eigen::VectorXd& x,
                         std::int64_t k);

// Noise-free model with no bias: y = C x.
SyntheticPerceptionModel ideal_perception(Eigen::Index n, Eigen::Index p);

}  // namespace sls
