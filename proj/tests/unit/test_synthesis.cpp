#include <cmath>
#include <random>

#include "doctest.h"
#include "sls_robust/controllers.hpp"
#include "sls_robust/errors.hpp"
#include "sls_robust/simulate.hpp"
#include "sls_robust/synthesis.hpp"

using namespace sls;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

DiscreteLtiSystem deadbeat_scalar() {
    DiscreteLtiSystem s;
    s.A = MatrixXd::Zero(1, 1);
    s.B = MatrixXd::Ones(1, 1);
    s.C = MatrixXd::Ones(1, 1);
    s.H = MatrixXd::Ones(1, 1);
    s.dt = 1.0;
    return s;
}

DiscreteLtiSystem double_integrator() {
    ContinuousLtiSystem c;
    c.A = MatrixXd{{0.0, 1.0}, {0.0, 0.0}};
    c.B = MatrixXd{{0.0}, {1.0}};
    c.C = MatrixXd::Identity(2, 2);
    c.H = MatrixXd::Identity(2, 2);
    return discretize(c, 0.1);
}

SynthesisProblem problem_for(const DiscreteLtiSystem& sys, int T) {
    SynthesisProblem pb;
    pb.sys = sys;
    pb.horizon = T;
    pb.eps_w = 0.05;
    pb.error_model.epsilon_e = 0.05;
    pb.error_model.s_hat = 1.0;
    pb.error_model.radius_r = 2.0;
    pb.cost.q_diag = VectorXd::Ones(sys.states());
    pb.cost.r_diag = VectorXd::Ones(sys.inputs());
    return pb;
}

double max_tap_diff(const FirOperator& a, const FirOperator& b) {
    double d = 0.0;
    for (int t = 1; t <= a.horizon(); ++t) d = std::max(d, (a.tap(t) - b.tap(t)).cwiseAbs().maxCoeff());
    return d;
}

double max_diff(const SystemResponses& a, const SystemResponses& b) {
    return std::max({max_tap_diff(a.phi_xw, b.phi_xw), max_tap_diff(a.phi_xe, b.phi_xe),
                     max_tap_diff(a.phi_uw, b.phi_uw), max_tap_diff(a.phi_ue, b.phi_ue)});
}

double max_z_residual(const DiscreteLtiSystem& sys, const SystemResponses& resp, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 2.0 * M_PI);
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
        const auto r = z_domain_residual(sys, resp, std::polar(1.0, u(rng)));
        worst = std::max({worst, r.left, r.right});
    }
    return worst;
}

// Largest S on a geometric grid below `start` at which the robust problem is
// feasible; the unconstrained point `free` must still violate the bound there.
double binding_s(SynthesisProblem pb, const AchievableSet& ach, const SystemResponses& free, double start) {
    pb.robustness_enabled = true;
    for (double s = start; s > 1e-6; s *= 0.9) {
        pb.error_model.s_hat = s;
        const GuaranteeReport at_free = evaluate_guarantee(pb, free);
        if (at_free.robustness_lhs <= at_free.robustness_rhs) break;
        try {
            synthesize(pb, ach);
            return s;
        } catch (const SynthesisInfeasible&) {
        }
    }
    return 0.0;
}

}  // namespace

TEST_CASE("tap layout packs and unpacks") {
    const TapLayout layout(3, 2, 4, 5);
    CHECK(layout.size() == 5 * (3 * 3 + 3 * 4 + 2 * 3 + 2 * 4));
    CHECK(layout.offset(ResponseBlock::XW) == 0);
    CHECK(layout.index(ResponseBlock::XE, 1, 0, 0) == layout.offset(ResponseBlock::XE));
    CHECK(layout.index(ResponseBlock::XW, 1, 1, 0) == 1);
    CHECK(layout.index(ResponseBlock::XW, 1, 0, 1) == 3);
    CHECK(layout.index(ResponseBlock::XW, 2, 0, 0) == 9);
    const VectorXd v = VectorXd::Random(layout.size());
    CHECK(layout.pack(layout.unpack(v)) == v);
}

TEST_CASE("deadbeat instance has a unique achievable point") {
    const auto sys = deadbeat_scalar();
    const AchievableSet ach = parametrize_achievable(sys, 2);
    CHECK(ach.basis.cols() == 0);
    const SystemResponses r = ach.layout.unpack(ach.offset);
    CHECK(r.phi_xw.tap(1)(0, 0) == doctest::Approx(1.0));
    CHECK(std::abs(r.phi_xw.tap(2)(0, 0)) <= 1e-12);
    for (const FirOperator* op : {&r.phi_xe, &r.phi_uw, &r.phi_ue}) CHECK(op->stacked().cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(achievability_residual(sys, r) <= 1e-12);
    CHECK(max_z_residual(sys, r, 1) <= 1e-8);

    SynthesisProblem pb = problem_for(sys, 2);
    pb.eps_w = 1.0;
    pb.error_model.epsilon_e = 1.0;
    pb.robustness_enabled = false;
    const SynthesisResult res = synthesize(pb);
    CHECK(res.cost == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(max_diff(res.responses, r) <= 1e-8);
    CHECK(inf_induced_norm(realize_controller(res.responses, 4).gain) <= 1e-8);

    pb.eps_w = 3.0;
    pb.error_model.epsilon_e = 3.0;
    CHECK(synthesize(pb).cost == doctest::Approx(3.0).epsilon(1e-8));

    pb.horizon = 1;
    CHECK_THROWS(synthesize(pb));
}

TEST_CASE("achievability constraints hold on random achievable points") {
    const auto sys = double_integrator();
    const AchievableSet ach = parametrize_achievable(sys, 8);
    CHECK(ach.residual <= 1e-10);
    CHECK(ach.basis.cols() > 0);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 5; ++trial) {
        const VectorXd xi = VectorXd::NullaryExpr(ach.basis.cols(), [&] { return g(rng); });
        const SystemResponses r = ach.layout.unpack(ach.offset + ach.basis * xi);
        CHECK(achievability_residual(sys, r) <= 1e-9);
        CHECK(max_z_residual(sys, r, static_cast<std::uint64_t>(trial)) <= 1e-8);

        const AffineConstraints ac = achievability_constraints(sys, 8);
        const VectorXd phi = ach.layout.pack(r);
        CHECK((ac.E * phi - ac.f).cwiseAbs().maxCoeff() <= 1e-9);
    }
    SystemResponses bad = ach.layout.unpack(ach.offset);
    bad.phi_xw.tap(1)(0, 0) += 1e-3;
    CHECK(achievability_residual(sys, bad) >= 1e-3 - 1e-12);
}

TEST_CASE("robustness bound arithmetic") {
    const RobustnessBound b = robustness_bound(1.0, 0.5, 1.0, 0.0, 0.0, 0.0);
    CHECK(b.rhs / b.coef_xe == doctest::Approx(1.0 / 1.5));
    CHECK(b.coef_xw == 0.0);

    const RobustnessBound lim = robustness_bound(4.0, 0.0, 2.0, 0.0, 0.0, 1e-3);
    CHECK(lim.rhs / lim.coef_xe == doctest::Approx(0.25 - 1e-3 / 4.0));

    const RobustnessBound full = robustness_bound(2.0, 0.1, 2.0, 0.05, 0.4, 1e-3, 1.5);
    CHECK(full.coef_xe == doctest::Approx(2.05));
    CHECK(full.coef_xw == doctest::Approx(0.0375));
    CHECK(full.rhs == doctest::Approx(1.0 - 0.2 - 1e-3));

    CHECK_THROWS_AS(robustness_bound(1.0, 0.1, 1.0, 0.0, 1.0, 1e-3), SynthesisInfeasible);
    CHECK_THROWS(robustness_bound(1.0, 0.1, 0.0, 0.0, 0.0, 1e-3));
}

TEST_CASE("guarantee gamma") {
    CHECK(guarantee_gamma(3.0, 0.0, 0.2) == 0.2);
    CHECK(guarantee_gamma(0.5, 1.0, 1.0) == doctest::Approx(2.0));
    CHECK_THROWS_AS(guarantee_gamma(1.0, 1.0, 1.0), std::domain_error);
    CHECK_THROWS_AS(guarantee_gamma(2.0, 1.0, 1.0), std::domain_error);
}

TEST_CASE("cost equals the stacked operator norm") {
    const auto sys = double_integrator();
    const AchievableSet ach = parametrize_achievable(sys, 6);
    SynthesisProblem pb = problem_for(sys, 6);
    pb.cost.q_diag = VectorXd{{2.0, 0.5}};
    pb.cost.r_diag = VectorXd{{0.3}};
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    const VectorXd xi = VectorXd::NullaryExpr(ach.basis.cols(), [&] { return g(rng); });
    const SystemResponses r = ach.layout.unpack(ach.offset + ach.basis * xi);

    std::vector<MatrixXd> taps;
    for (int t = 1; t <= 6; ++t) {
        MatrixXd tap(3, 4);
        tap.topLeftCorner(2, 2) = pb.eps_w * r.phi_xw.tap(t) * sys.H;
        tap.topLeftCorner(2, 2).row(0) *= std::sqrt(2.0);
        tap.topLeftCorner(2, 2).row(1) *= std::sqrt(0.5);
        tap.topRightCorner(2, 2) = pb.error_model.epsilon_e * r.phi_xe.tap(t);
        tap.topRightCorner(2, 2).row(0) *= std::sqrt(2.0);
        tap.topRightCorner(2, 2).row(1) *= std::sqrt(0.5);
        tap.bottomLeftCorner(1, 2) = std::sqrt(0.3) * pb.eps_w * r.phi_uw.tap(t) * sys.H;
        tap.bottomRightCorner(1, 2) = std::sqrt(0.3) * pb.error_model.epsilon_e * r.phi_ue.tap(t);
        taps.push_back(tap);
    }
    CHECK(quadratic_l1_cost(pb, r) == doctest::Approx(inf_induced_norm(FirOperator(taps))).epsilon(1e-9));

    pb.cost.kind = CostKind::Imitation;
    pb.cost.nominal = r;
    CHECK(imitation_cost(pb, r) == 0.0);
}

TEST_CASE("synthesis on a small plant") {
    const auto sys = double_integrator();
    const int T = 10;
    const AchievableSet ach = parametrize_achievable(sys, T);
    SynthesisProblem pb = problem_for(sys, T);

    pb.robustness_enabled = false;
    const SynthesisResult free = synthesize(pb, ach);
    CHECK(free.status == lp::Status::Optimal);
    CHECK(achievability_residual(sys, free.responses) <= 1e-7);
    CHECK(free.cost == doctest::Approx(quadratic_l1_cost(pb, free.responses)));

    // Pick S so the unconstrained optimum violates the bound.
    const double xe = free.report.phi_xe_norm;
    pb.eps_w = 0.01;
    pb.error_model.s_hat = binding_s(pb, ach, free.responses, 1.2 / xe);
    REQUIRE(pb.error_model.s_hat > 0.0);
    pb.robustness_enabled = true;
    const SynthesisResult robust = synthesize(pb, ach);
    const GuaranteeReport& g = robust.report;
    CHECK(achievability_residual(sys, robust.responses) <= 1e-7);
    CHECK(max_z_residual(sys, robust.responses, 3) <= 1e-7);
    CHECK(g.robustness_lhs <= g.robustness_rhs + 1e-7);
    CHECK(g.feasibility_margin >= -1e-7);
    CHECK(robust.cost >= free.cost - 1e-7);
    REQUIRE(g.gamma.has_value());
    CHECK(*g.gamma == doctest::Approx(0.05 / (1.0 - pb.error_model.s_hat * g.phi_xe_norm)));
    CHECK_FALSE(g.guarantee_void);

    const GuaranteeReport again = evaluate_guarantee(pb, robust.responses);
    CHECK(again.robustness_lhs == doctest::Approx(g.robustness_lhs));

    // Closed-loop impulse responses reproduce the taps.
    SlsFeedback exact(robust.responses);
    const SystemResponses imp = closed_loop_impulse(sys, exact, T);
    CHECK(max_diff(imp, robust.responses) <= 1e-6);

    // Feasibility is monotone in S.
    bool infeasible_seen = false;
    for (double scale : {1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0}) {
        pb.error_model.s_hat = scale / xe;
        bool feasible = true;
        try {
            synthesize(pb, ach);
        } catch (const SynthesisInfeasible& e) {
            feasible = false;
            CHECK(e.diagnostic.min_lhs > e.diagnostic.rhs);
            CHECK_FALSE(e.diagnostic.binding.empty());
        }
        if (infeasible_seen) CHECK_FALSE(feasible);
        infeasible_seen = infeasible_seen || !feasible;
    }
    CHECK(infeasible_seen);
}

TEST_CASE("imitation fixed point and robustification") {
    const auto sys = double_integrator();
    const int T = 10;
    const AchievableSet ach = parametrize_achievable(sys, T);
    SynthesisProblem pb = problem_for(sys, T);
    pb.robustness_enabled = false;
    const SystemResponses nominal = nominal_l1_responses(pb, ach);

    SynthesisProblem im = pb;
    im.cost.kind = CostKind::Imitation;
    im.cost.nominal = nominal;
    const SynthesisResult same = synthesize(im, ach);
    CHECK(max_diff(same.responses, nominal) <= 1e-6);
    CHECK(same.cost <= 1e-6);

    im.eps_w = 0.01;
    im.error_model.s_hat = binding_s(im, ach, nominal, 1.2 / inf_induced_norm(nominal.phi_xe));
    REQUIRE(im.error_model.s_hat > 0.0);
    im.robustness_enabled = true;
    const SynthesisResult moved = synthesize(im, ach);
    CHECK(moved.cost > 1e-6);
    CHECK(moved.report.robustness_lhs <= moved.report.robustness_rhs + 1e-7);

    SynthesisProblem wrong = im;
    wrong.cost.nominal = parametrize_achievable(sys, 6).layout.unpack(parametrize_achievable(sys, 6).offset);
    CHECK_THROWS(synthesize(wrong, ach));
}

TEST_CASE("problem validation") {
    SynthesisProblem pb = problem_for(double_integrator(), 5);
    CHECK_NOTHROW(pb.validate());
    auto bad = pb;
    bad.margin = 0.0;
    CHECK_THROWS(bad.validate());
    bad = pb;
    bad.eps_w = -1.0;
    CHECK_THROWS(bad.validate());
    bad = pb;
    bad.cost.q_diag = VectorXd::Ones(3);
    CHECK_THROWS_AS(bad.validate(), DimensionError);
    bad = pb;
    bad.cost.nominal = SystemResponses{};
    CHECK_THROWS(bad.validate());
}
