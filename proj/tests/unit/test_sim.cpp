#include <cmath>
#include <random>

#include "doctest.h"
#include "sls_robust/controllers.hpp"
#include "sls_robust/simulate.hpp"
#include "sls_robust/synthesis.hpp"

using namespace sls;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

SimSetup ideal_setup() {
    SimSetup s;
    s.params = QuadrotorParams{0.256, 9.81};
    s.sys = discretize(quadrotor_hover_model(s.params), 0.1);
    s.reference.dt = 0.1;
    s.perception = ideal_perception(6, 6);
    return s;
}

SyntheticPerceptionModel biased_model() {
    SyntheticPerceptionModel pm = ideal_perception(6, 6);
    pm.bias_amplitudes = VectorXd{{0.07, 0.05, 0.03, 0.0, 0.01, 0.0}};
    pm.bias_frequencies = VectorXd::Constant(6, 3.0);
    pm.directions = MatrixXd::Identity(6, 6);
    pm.phases = VectorXd::LinSpaced(6, 0.0, 3.5);
    pm.noise_amplitude = 0.01;
    pm.degradation_factor = 2.0;
    pm.seed = 17;
    return pm;
}

SimLog log_with_norms(const std::vector<double>& norms) {
    SimLog log;
    const auto n = static_cast<Eigen::Index>(norms.size());
    for (Eigen::Index k = 0; k < n; ++k) log.times.push_back(0.1 * static_cast<double>(k));
    log.x = MatrixXd::Zero(6, n);
    log.x_ref = MatrixXd::Zero(6, n);
    log.y = MatrixXd::Zero(6, n);
    log.u = MatrixXd::Zero(3, n);
    log.e = MatrixXd::Zero(6, n);
    for (Eigen::Index k = 0; k < n; ++k) log.e(0, k) = norms[static_cast<std::size_t>(k)];
    log.e_norm = norms;
    return log;
}

}  // namespace

TEST_CASE("circle reference") {
    const QuadrotorParams qp{0.256, 9.81};
    CircleReference hover;
    hover.radius = 0.0;
    for (int k : {0, 7, 123}) {
        const auto r = reference_signal(hover, qp, k);
        CHECK(r.x_ref == VectorXd{{0.0, 0.0, 1.0, 0.0, 0.0, 0.0}});
        CHECK(r.u_ff.isApprox(VectorXd{{0.0, 0.0, 0.256 * 9.81}}));
    }

    CircleReference c;
    const auto q = reference_signal(c, qp, 25);
    CHECK(q.x_ref(0) == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
    CHECK(q.x_ref(1) == doctest::Approx(1.0));
    CHECK(q.x_ref(2) == doctest::Approx(1.0));
    const double speed = q.x_ref.segment(3, 3).norm();
    CHECK(speed == doctest::Approx(2.0 * M_PI / 10.0).epsilon(1e-3));
    CHECK(c.steps() == 300);

    // Feedforward propagates the reference through the discrete model.
    const auto sys = discretize(quadrotor_hover_model(qp), 0.1);
    const VectorXd trim = hover_trim(qp);
    for (int k = 0; k < 120; k += 7) {
        const auto a = reference_signal(c, qp, k);
        const auto b = reference_signal(c, qp, k + 1);
        const VectorXd next = step(sys, a.x_ref, a.u_ff - trim, VectorXd::Zero(6));
        CHECK((next - b.x_ref).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("pd controller") {
    const QuadrotorParams qp{0.256, 9.81};
    const PdController pd({}, qp);
    const Eigen::Vector3d hover = pd.command(VectorXd::Zero(6));
    CHECK(hover(0) == 0.0);
    CHECK(hover(1) == 0.0);
    CHECK(hover(2) == doctest::Approx(2.51136).epsilon(1e-12));
    CHECK(hover_trim(qp)(2) == doctest::Approx(2.51136).epsilon(1e-12));

    VectorXd behind = VectorXd::Zero(6);
    behind(0) = -1.0;
    CHECK(pd.command(behind)(0) == doctest::Approx(-4.0 / 9.81));
    VectorXd left = VectorXd::Zero(6);
    left(4) = -1.0;
    CHECK(pd.command(left)(1) == doctest::Approx(3.0 / 9.81));

    PdGains bad;
    bad.kp(0) = std::nan("");
    CHECK_THROWS(bad.validate());
}

TEST_CASE("perception") {
    const MatrixXd C = MatrixXd::Identity(6, 6);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    const VectorXd x = VectorXd::NullaryExpr(6, [&] { return u(rng); });
    CHECK(perceive(ideal_perception(6, 6), C, x, 5) == x);

    const SyntheticPerceptionModel pm = biased_model();
    CHECK(perceive(pm, C, x, 9) == perceive(pm, C, x, 9));
    CHECK(perceive(pm, C, x, 9) != perceive(pm, C, x, 10));
    CHECK(pm.noise_bound() == doctest::Approx(0.02));
    CHECK(pm.error_bound() == doctest::Approx(0.07 + 0.02));
    CHECK(pm.lipschitz() == doctest::Approx(0.21));

    double worst = 0.0;
    for (int k = 0; k < 100000; ++k) {
        const VectorXd s = VectorXd::NullaryExpr(6, [&] { return u(rng); });
        worst = std::max(worst, (perceive(pm, C, s, k) - s).cwiseAbs().maxCoeff());
    }
    CHECK(worst <= pm.error_bound());
    CHECK(worst >= 0.9 * pm.error_bound());

    SyntheticPerceptionModel other = pm;
    other.seed = 18;
    CHECK(perception_noise(pm, 6, 4) != perception_noise(other, 6, 4));
}

TEST_CASE("ideal tracking is exact") {
    SimSetup s = ideal_setup();
    PdController pd({}, s.params);
    const SimLog log = simulate(s, pd, 300, 1);
    CHECK(log.size() == 300);
    CHECK((log.x - log.x_ref).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(log.e.cwiseAbs().maxCoeff() == 0.0);
    const MetricsSummary m = metrics(log, 0.01);
    CHECK(m.max_e == 0.0);
    CHECK(m.bound_satisfied);

    const TrajectoryDataset data = dataset_from_log(log);
    CHECK(data.size() == 300);
    CHECK(data.states == log.x);
}

TEST_CASE("simulation is deterministic and logs consistent errors") {
    SimSetup s = ideal_setup();
    s.perception = biased_model();
    s.eps_w = 0.05;
    PdController pd({}, s.params);
    const SimLog a = simulate(s, pd, 200, 42);
    const SimLog b = simulate(s, pd, 200, 42);
    CHECK(a.x == b.x);
    CHECK(a.u == b.u);
    CHECK(a.e_norm == b.e_norm);
    CHECK(a.x != simulate(s, pd, 200, 43).x);
    CHECK((a.e - (a.y - s.sys.C * a.x)).cwiseAbs().maxCoeff() == 0.0);
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(a.e_norm[k] == a.e.col(static_cast<Eigen::Index>(k)).cwiseAbs().maxCoeff());
    }
}

TEST_CASE("diverging closed loop aborts with a partial log") {
    SimSetup s = ideal_setup();
    s.eps_w = 0.01;
    PdGains wild;
    wild.kp = Eigen::Vector3d::Constant(-400.0);
    PdController pd(wild, s.params);
    try {
        simulate(s, pd, 5000, 1);
        FAIL("expected an abort");
    } catch (const SimulationAborted& e) {
        CHECK(e.step > 0);
        // The offending step is the last logged one.
        CHECK(e.log.size() == static_cast<std::size_t>(e.step) + 1);
        CHECK(e.log.x.leftCols(e.step).allFinite());
    }
}

TEST_CASE("metrics") {
    const MetricsSummary m = metrics(log_with_norms({0.1, 0.3}), 0.2);
    CHECK_FALSE(m.bound_satisfied);
    CHECK(m.max_e == 0.3);
    CHECK(m.mean_e == doctest::Approx(0.2));
    CHECK(metrics(log_with_norms({0.1, 0.15}), 0.2).bound_satisfied);

    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    SimLog log = log_with_norms(std::vector<double>(50, 0.0));
    log.x = MatrixXd::NullaryExpr(6, 50, [&] { return g(rng); });
    log.x_ref = MatrixXd::NullaryExpr(6, 50, [&] { return g(rng); });
    double acc = 0.0;
    for (int k = 0; k < 50; ++k) {
        for (int i = 0; i < 3; ++i) acc += std::pow(log.x(i, k) - log.x_ref(i, k), 2);
    }
    CHECK(std::abs(metrics(log, std::nullopt).rmse_position - std::sqrt(acc / 50.0)) <= 1e-12);
    CHECK_THROWS(metrics(log_with_norms({}), 1.0));
}

TEST_CASE("smoothing") {
    const std::vector<double> flat(40, 0.7);
    for (double v : smooth(flat, 0.1, 1.0)) CHECK(v == doctest::Approx(0.7));

    std::vector<double> impulse(60, 0.0);
    impulse[20] = 1.0;
    const auto s = smooth(impulse, 0.1, 1.0);
    for (std::size_t k = 0; k < 60; ++k) CHECK(s[k] == doctest::Approx(k >= 20 && k < 30 ? 0.1 : 0.0));

    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u;
    std::vector<double> r(80);
    for (auto& v : r) v = u(rng);
    const auto out = smooth(r, 0.1, 0.5);
    for (std::size_t k = 0; k < r.size(); ++k) {
        const std::size_t lo = k >= 4 ? k - 4 : 0;
        double acc = 0.0;
        for (std::size_t j = lo; j <= k; ++j) acc += r[j];
        CHECK(out[k] == doctest::Approx(acc / static_cast<double>(k - lo + 1)).epsilon(1e-12));
    }
    CHECK_THROWS(smooth(r, 0.1, 0.05));
}

TEST_CASE("closed-loop impulse matches synthesized responses") {
    const auto sys = discretize(quadrotor_hover_model({}), 0.1);
    const int T = 8;
    SynthesisProblem pb;
    pb.sys = sys;
    pb.horizon = T;
    pb.error_model.epsilon_e = 0.05;
    pb.error_model.s_hat = 0.1;
    pb.error_model.radius_r = 2.0;
    pb.cost.q_diag = VectorXd::Ones(6);
    pb.cost.r_diag = VectorXd::Ones(3);
    const SynthesisResult res = synthesize(pb);

    SlsFeedback exact(res.responses);
    const SystemResponses imp = closed_loop_impulse(sys, exact, 2 * T);
    for (int t = 1; t <= 2 * T; ++t) {
        const auto ref = [&](const FirOperator& op) { return t <= T ? op.tap(t) : MatrixXd::Zero(op.rows(), op.cols()); };
        CHECK((imp.phi_xw.tap(t) - ref(res.responses.phi_xw)).cwiseAbs().maxCoeff() <= 1e-6);
        CHECK((imp.phi_xe.tap(t) - ref(res.responses.phi_xe)).cwiseAbs().maxCoeff() <= 1e-6);
        CHECK((imp.phi_uw.tap(t) - ref(res.responses.phi_uw)).cwiseAbs().maxCoeff() <= 1e-6);
        CHECK((imp.phi_ue.tap(t) - ref(res.responses.phi_ue)).cwiseAbs().maxCoeff() <= 1e-6);
    }

    // The truncated FIR realization agrees up to the horizon.
    FirFeedback fir(realize_controller(res.responses, 2 * T));
    const SystemResponses imp_fir = closed_loop_impulse(sys, fir, T);
    for (int t = 1; t <= T; ++t) {
        CHECK((imp_fir.phi_xw.tap(t) - res.responses.phi_xw.tap(t)).cwiseAbs().maxCoeff() <= 1e-6);
        CHECK((imp_fir.phi_ue.tap(t) - res.responses.phi_ue.tap(t)).cwiseAbs().maxCoeff() <= 1e-6);
    }

    // Clones start from a clean state.
    auto copy = exact.clone();
    const SystemResponses again = closed_loop_impulse(sys, *copy, T);
    CHECK((again.phi_xe.tap(3) - imp.phi_xe.tap(3)).cwiseAbs().maxCoeff() == 0.0);
}
