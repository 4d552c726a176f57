#include "sls_robust/simulate.hpp"

#include <cmath>
#include <random>

#include "sls_robust/errors.hpp"

namespace sls {

namespace {

constexpr std::uint32_t kDisturbanceStream = 0x77u;

Eigen::VectorXd disturbance(std::uint64_t seed, int k, Eigen::Index d, double eps_w) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    if (eps_w == 0.0) return w;
    const auto uk = static_cast<std::uint64_t>(k);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(uk), static_cast<std::uint32_t>(uk >> 32), kDisturbanceStream};
    std::mt19937_64 eng(seq);
    std::uniform_real_distribution<double> dist(-eps_w, eps_w);
    for (Eigen::Index i = 0; i < d; ++i) w(i) = dist(eng);
    return w;
}

void resize_log(SimLog& log, Eigen::Index n, Eigen::Index p, Eigen::Index m, int steps) {
    log.times.assign(static_cast<std::size_t>(steps), 0.0);
    log.e_norm.assign(static_cast<std::size_t>(steps), 0.0);
    log.x.resize(n, steps);
    log.x_ref.resize(n, steps);
    log.y.resize(p, steps);
    log.u.resize(m, steps);
    log.e.resize(p, steps);
}

SimLog truncated(const SimLog& log, int steps) {
    SimLog out;
    out.times.assign(log.times.begin(), log.times.begin() + steps);
    out.e_norm.assign(log.e_norm.begin(), log.e_norm.begin() + steps);
    out.x = log.x.leftCols(steps);
    out.x_ref = log.x_ref.leftCols(steps);
    out.y = log.y.leftCols(steps);
    out.u = log.u.leftCols(steps);
    out.e = log.e.leftCols(steps);
    return out;
}

}  // namespace

void SimLog::validate() const {
    const auto n = static_cast<Eigen::Index>(times.size());
    if (x.cols() != n || x_ref.cols() != n || y.cols() != n || u.cols() != n || e.cols() != n ||
        e_norm.size() != times.size()) {
        throw DimensionError("simulation log columns differ in length");
    }
}

SimLog simulate(const SimSetup& s, Controller& controller, int steps, std::uint64_t seed) {
    s.sys.validate();
    s.reference.validate();
    const Eigen::Index n = s.sys.states(), m = s.sys.inputs(), p = s.sys.outputs();
    s.perception.validate(n, p);
    if (steps < 0) throw std::invalid_argument("simulate: steps must be >= 0");
    if (!(s.eps_w >= 0.0)) throw std::invalid_argument("simulate: eps_w must be >= 0");

    SimLog log;
    resize_log(log, n, p, m, steps);
    const Eigen::VectorXd trim = hover_trim(s.params);
    if (trim.size() != m) throw DimensionError("simulate: input dimension is not the quadrotor's");
    Eigen::VectorXd x = s.x0.value_or(reference_signal(s.reference, s.params, 0).x_ref);
    if (x.size() != n) throw DimensionError("simulate: initial state dimension mismatch");

    controller.reset();
    for (int k = 0; k < steps; ++k) {
        const ReferencePoint ref = reference_signal(s.reference, s.params, k);
        const Eigen::VectorXd y = perceive(s.perception, s.sys.C, x, k);
        const Eigen::VectorXd u = ref.u_ff + controller.compute(y - s.sys.C * ref.x_ref);
        const auto c = static_cast<Eigen::Index>(k);
        log.times[static_cast<std::size_t>(k)] = k * s.sys.dt;
        log.x.col(c) = x;
        log.x_ref.col(c) = ref.x_ref;
        log.y.col(c) = y;
        log.u.col(c) = u;
        log.e.col(c) = y - s.sys.C * x;
        log.e_norm[static_cast<std::size_t>(k)] = p ? log.e.col(c).cwiseAbs().maxCoeff() : 0.0;
        if (!x.allFinite() || !u.allFinite() || !y.allFinite()) {
            throw SimulationAborted("simulation produced a non-finite value at step " + std::to_string(k), k,
                                    truncated(log, k + 1));
        }
        x = step(s.sys, x, u - trim, disturbance(seed, k, s.sys.disturbances(), s.eps_w));
    }
    return log;
}

SystemResponses closed_loop_impulse(const DiscreteLtiSystem& sys, Controller& controller, int horizon) {
    sys.validate();
    if (horizon < 1) throw std::invalid_argument("closed_loop_impulse: horizon must be >= 1");
    const Eigen::Index n = sys.states(), m = sys.inputs(), p = sys.outputs();
    SystemResponses out{FirOperator(n, n, horizon), FirOperator(n, p, horizon), FirOperator(m, n, horizon),
                        FirOperator(m, p, horizon)};

    auto run = [&](Eigen::Index channel, bool state_kick, FirOperator& xs, FirOperator& us) {
        controller.reset();
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
        for (int k = 0; k <= horizon; ++k) {
            Eigen::VectorXd y = sys.C * x;
            if (!state_kick && k == 0) y(channel) += 1.0;
            const Eigen::VectorXd u = controller.compute(y);
            if (k >= 1) {
                xs.tap(k).col(channel) = x;
                us.tap(k).col(channel) = u;
            }
            x = sys.A * x + sys.B * u;
            if (state_kick && k == 0) x(channel) += 1.0;
        }
    };
    for (Eigen::Index j = 0; j < n; ++j) run(j, true, out.phi_xw, out.phi_uw);
    for (Eigen::Index j = 0; j < p; ++j) run(j, false, out.phi_xe, out.phi_ue);
    controller.reset();
    return out;
}

TrajectoryDataset dataset_from_log(const SimLog& log) {
    log.validate();
    return TrajectoryDataset{log.times, log.x, log.y};
}

MetricsSummary metrics(const SimLog& log, std::optional<double> gamma) {
    log.validate();
    if (log.size() == 0) throw std::invalid_argument("metrics: empty log");
    MetricsSummary out;
    const Eigen::Index pos = std::min<Eigen::Index>(3, log.x.rows());
    const auto count = static_cast<double>(log.size());
    out.rmse_position = std::sqrt((log.x.topRows(pos) - log.x_ref.topRows(pos)).squaredNorm() / count);
    double sum = 0.0;
    for (double v : log.e_norm) {
        out.max_e = std::max(out.max_e, v);
        sum += v;
    }
    out.mean_e = sum / count;
    out.gamma = gamma;
    out.bound_satisfied = !gamma || out.max_e <= *gamma;
    return out;
}

std::vector<double> smooth(const std::vector<double>& series, double dt, double time_constant) {
    if (!(dt > 0.0)) throw std::invalid_argument("smooth: dt must be > 0");
    if (!(time_constant >= dt * (1.0 - 1e-12))) throw std::invalid_argument("smooth: time constant below dt");
    const auto window = static_cast<std::size_t>(std::ceil(time_constant / dt - 1e-9));
    std::vector<double> out(series.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < series.size(); ++k) {
        acc += series[k];
        if (k >= window) acc -= series[k - window];
        out[k] = acc / static_cast<double>(std::min(window, k + 1));
    }
    return out;
}

}  // namespace sls
