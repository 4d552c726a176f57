#include "sls_robust/perception.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "sls_robust/errors.hpp"

namespace sls {

namespace {

constexpr std::uint32_t kPerceptionStream = 0x70u;

std::mt19937_64 step_engine(std::uint64_t seed, std::int64_t k, std::uint32_t stream) {
    const auto uk = static_cast<std::uint64_t>(k);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(uk), static_cast<std::uint32_t>(uk >> 32), stream};
    return std::mt19937_64(seq);
}

}  // namespace

void SyntheticPerceptionModel::validate(Eigen::Index n, Eigen::Index p) const {
    if (bias_amplitudes.size() != p || bias_frequencies.size() != p || phases.size() != p || directions.rows() != p ||
        directions.cols() != n) {
        throw DimensionError("perception model does not match the state/output dimensions");
    }
    if (!bias_amplitudes.allFinite() || !bias_frequencies.allFinite() || !phases.allFinite() ||
        !directions.allFinite()) {
        throw std::invalid_argument("perception model contains non-finite values");
    }
    if (p > 0 && (bias_amplitudes.minCoeff() < 0.0 || bias_frequencies.minCoeff() < 0.0)) {
        throw std::invalid_argument("bias amplitudes and frequencies must be >= 0");
    }
    if (!(noise_amplitude >= 0.0) || !(degradation_factor >= 0.0) || !std::isfinite(noise_amplitude) ||
        !std::isfinite(degradation_factor)) {
        throw std::invalid_argument("noise amplitude and degradation factor must be finite and >= 0");
    }
}

double SyntheticPerceptionModel::lipschitz() const {
    double l = 0.0;
    for (Eigen::Index i = 0; i < bias_amplitudes.size(); ++i) {
        l = std::max(l, bias_amplitudes(i) * bias_frequencies(i) * directions.row(i).lpNorm<1>());
    }
    return l;
}

double SyntheticPerceptionModel::error_bound() const {
    return (bias_amplitudes.size() ? bias_amplitudes.maxCoeff() : 0.0) + noise_bound();
}

Eigen::VectorXd perception_bias(const SyntheticPerceptionModel& model, const Eigen::VectorXd& x) {
    const Eigen::VectorXd arg = model.bias_frequencies.cwiseProduct(model.directions * x) + model.phases;
    return model.bias_amplitudes.cwiseProduct(arg.array().sin().matrix());
}

Eigen::VectorXd perception_noise(const SyntheticPerceptionModel& model, Eigen::Index p, std::int64_t k) {
    const double a = model.noise_bound();
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(p);
    if (a == 0.0) return eta;
    auto eng = step_engine(model.seed, k, kPerceptionStream);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (Eigen::Index i = 0; i < p; ++i) eta(i) = a * dist(eng);
    return eta;
}

Eigen::VectorXd perceive(const SyntheticPerceptionModel& model, const Eigen::MatrixXd& C, const Eigen::VectorXd& x,
                         std::int64_t k) {
    if (C.cols() != x.size()) throw DimensionError("perceive: state does not match C");
    return C * x + perception_bias(model, x) + perception_noise(model, C.rows(), k);
}

SyntheticPerceptionModel ideal_perception(Eigen::Index n, Eigen::Index p) {
    SyntheticPerceptionModel m;
    m.bias_amplitudes = Eigen::VectorXd::Zero(p);
    m.bias_frequencies = Eigen::VectorXd::Zero(p);
    m.phases = Eigen::VectorXd::Zero(p);
    m.directions = Eigen::MatrixXd::Zero(p, n);
    return m;
}

}  // namespace sls
