#include "sls_robust/error_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "sls_robust/errors.hpp"
#include "sls_robust/kernels.hpp"

namespace sls {

namespace {

void check_quantile(double q) {
    if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("quantile must lie in (0, 1]");
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SlopeScan {
    std::size_t pairs = 0;
    double max = 0.0;
    std::vector<double> slopes;  // only filled when a quantile below 1 is requested
};

// Unordered pairs i < j suffice: the slope is symmetric, so every ordered
// pair value appears exactly twice and nearest-rank quantiles coincide.
SlopeScan scan_pairs(const Eigen::MatrixXd& states, const Eigen::MatrixXd& res, double radius, bool keep_all,
                     std::size_t max_points) {
    Eigen::Index count = states.cols();
    std::vector<Eigen::Index> pick;
    if (static_cast<std::size_t>(count) > max_points) {
        const double stride = static_cast<double>(count) / static_cast<double>(max_points);
        for (std::size_t i = 0; i < max_points; ++i) pick.push_back(static_cast<Eigen::Index>(std::floor(i * stride)));
    }
    RowMajor xs, es;
    if (pick.empty()) {
        xs = states;
        es = res;
    } else {
        xs.resize(states.rows(), static_cast<Eigen::Index>(pick.size()));
        es.resize(res.rows(), static_cast<Eigen::Index>(pick.size()));
        for (std::size_t k = 0; k < pick.size(); ++k) {
            xs.col(static_cast<Eigen::Index>(k)) = states.col(pick[k]);
            es.col(static_cast<Eigen::Index>(k)) = res.col(pick[k]);
        }
        count = static_cast<Eigen::Index>(pick.size());
    }

    const auto& table = kernels::active();
    const std::size_t n = static_cast<std::size_t>(count);
    std::vector<double> dist(n), ediff(n);
    Eigen::VectorXd xq(xs.rows()), eq(es.rows());
    SlopeScan scan;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const std::size_t rest = n - i - 1;
        xq = xs.col(static_cast<Eigen::Index>(i));
        eq = es.col(static_cast<Eigen::Index>(i));
        table.linf_dist(xs.data() + i + 1, n, static_cast<std::size_t>(xs.rows()), rest, xq.data(), dist.data());
        table.linf_dist(es.data() + i + 1, n, static_cast<std::size_t>(es.rows()), rest, eq.data(), ediff.data());
        for (std::size_t j = 0; j < rest; ++j) {
            const double d = dist[j];
            if (!(d > 0.0) || !(d < radius)) continue;
            const double slope = ediff[j] / d;
            ++scan.pairs;
            scan.max = std::max(scan.max, slope);
            if (keep_all) scan.slopes.push_back(slope);
        }
    }
    return scan;
}

void check_pair_inputs(const Eigen::MatrixXd& states, const Eigen::MatrixXd& res, double radius, double q) {
    if (states.cols() != res.cols()) throw DimensionError("s_slope: states and residuals differ in length");
    if (!(radius > 0.0) || !std::isfinite(radius)) throw std::invalid_argument("s_slope: radius must be positive");
    check_quantile(q);
}

}  // namespace

void TrajectoryDataset::validate() const {
    const auto n = static_cast<Eigen::Index>(times.size());
    if (n < 2) throw std::invalid_argument("trajectory dataset needs at least two samples");
    if (states.cols() != n || measurements.cols() != n) {
        throw DimensionError("trajectory dataset columns must match the number of time stamps");
    }
    if (!states.allFinite() || !measurements.allFinite()) {
        throw std::invalid_argument("trajectory dataset contains non-finite values");
    }
}

void ErrorModel::validate() const {
    if (!(epsilon_e >= 0.0) || !std::isfinite(epsilon_e)) throw std::invalid_argument("epsilon_e must be >= 0");
    if (!(s_hat >= 0.0) || !std::isfinite(s_hat)) throw std::invalid_argument("s_hat must be >= 0");
    if (!(radius_r > 0.0) || !std::isfinite(radius_r)) throw std::invalid_argument("radius must be positive");
    check_quantile(quantile_eps);
    check_quantile(quantile_slope);
}

double nearest_rank_quantile(std::vector<double> values, double q) {
    check_quantile(q);
    if (values.empty()) throw std::invalid_argument("quantile of an empty set");
    const double n = static_cast<double>(values.size());
    // The small offset keeps q * n from rounding up past an exact integer.
    auto rank = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    auto nth = values.begin() + static_cast<std::ptrdiff_t>(rank - 1);
    std::nth_element(values.begin(), nth, values.end());
    return *nth;
}

Eigen::MatrixXd residuals(const TrajectoryDataset& data, const Eigen::MatrixXd& C) {
    if (C.cols() != data.states.rows() || C.rows() != data.measurements.rows()) {
        throw DimensionError("residuals: C does not match state/measurement dimensions");
    }
    if (data.states.cols() != data.measurements.cols()) {
        throw DimensionError("residuals: states and measurements differ in length");
    }
    return data.measurements - C * data.states;
}

double epsilon_bound(const Eigen::MatrixXd& res, double quantile) {
    check_quantile(quantile);
    if (res.cols() == 0) throw std::invalid_argument("epsilon_bound: no residuals");
    std::vector<double> norms(static_cast<std::size_t>(res.cols()));
    for (Eigen::Index k = 0; k < res.cols(); ++k) {
        norms[static_cast<std::size_t>(k)] = res.rows() == 0 ? 0.0 : res.col(k).cwiseAbs().maxCoeff();
    }
    return nearest_rank_quantile(std::move(norms), quantile);
}

std::optional<double> s_slope(const Eigen::MatrixXd& states, const Eigen::MatrixXd& res, double radius,
                              double quantile, const SlopeOptions& options) {
    check_pair_inputs(states, res, radius, quantile);
    SlopeScan scan = scan_pairs(states, res, radius, quantile < 1.0, options.max_points);
    if (scan.pairs == 0) return std::nullopt;
    if (quantile >= 1.0) return scan.max;
    return nearest_rank_quantile(std::move(scan.slopes), quantile);
}

std::optional<double> s_slope(const TrajectoryDataset& data, const Eigen::MatrixXd& C, double radius,
                              double quantile, const SlopeOptions& options) {
    return s_slope(data.states, residuals(data, C), radius, quantile, options);
}

ErrorModel fit(const TrajectoryDataset& data, const Eigen::MatrixXd& C, double radius, double quantile_eps,
               double quantile_slope, const SlopeOptions& options) {
    data.validate();
    const Eigen::MatrixXd res = residuals(data, C);
    check_pair_inputs(data.states, res, radius, quantile_slope);

    SlopeScan scan = scan_pairs(data.states, res, radius, quantile_slope < 1.0, options.max_points);
    if (scan.pairs == 0) {
        throw NoNeighborsError("no pair of distinct training states lies within radius " + std::to_string(radius));
    }

    ErrorModel model;
    model.epsilon_e = epsilon_bound(res, quantile_eps);
    model.s_hat_max = scan.max;
    model.s_hat = quantile_slope >= 1.0 ? scan.max : nearest_rank_quantile(std::move(scan.slopes), quantile_slope);
    model.radius_r = radius;
    model.quantile_eps = quantile_eps;
    model.quantile_slope = quantile_slope;
    model.pair_count = scan.pairs;
    model.training_states = data.states;
    return model;
}

}  // namespace sls
