#include <random>

#include "doctest.h"
#include "sls_robust/errors.hpp"
#include "sls_robust/fir.hpp"

using namespace sls;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::mt19937_64& rng() {
    static std::mt19937_64 r(11);
    return r;
}

MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> g;
    return MatrixXd::NullaryExpr(rows, cols, [&] { return g(rng()); });
}

FirOperator random_fir(Eigen::Index rows, Eigen::Index cols, int horizon) {
    std::vector<MatrixXd> taps;
    for (int t = 0; t < horizon; ++t) taps.push_back(random_matrix(rows, cols));
    return FirOperator(taps);
}

FirOperator scalar_fir(std::vector<double> taps) {
    std::vector<MatrixXd> m;
    for (double v : taps) m.push_back(MatrixXd::Constant(1, 1, v));
    return FirOperator(m);
}

// Direct double loop: y_k = sum_{t=1}^{min(k,T)} Phi(t) s_{k-t}.
Signal apply_oracle(const FirOperator& op, const Signal& s) {
    Signal y = Signal::Zero(op.rows(), s.cols());
    for (Eigen::Index k = 0; k < s.cols(); ++k) {
        for (int t = 1; t <= op.horizon() && t <= k; ++t) y.col(k) += op.tap(t) * s.col(k - t);
    }
    return y;
}

}  // namespace

TEST_CASE("induced norm") {
    CHECK(inf_induced_norm(FirOperator({MatrixXd::Identity(3, 3)})) == 1.0);
    CHECK(inf_induced_norm(FirOperator({MatrixXd{{1.0, -2.0}}, MatrixXd{{3.0, 0.0}}})) == 6.0);
    CHECK(inf_induced_norm(FirOperator(2, 3, 4)) == 0.0);
}

TEST_CASE("induced norm is attained by a sign sequence") {
    // Scalar-input operators: exhaustive search over +-1 inputs of length T.
    for (int trial = 0; trial < 5; ++trial) {
        const int T = 6;
        const FirOperator op = random_fir(2, 1, T);
        double best = 0.0;
        for (int mask = 0; mask < (1 << (T + 1)); ++mask) {
            Signal s(1, T + 1);
            for (int k = 0; k <= T; ++k) s(0, k) = (mask >> k & 1) ? 1.0 : -1.0;
            best = std::max(best, signal_apply(op, s).cwiseAbs().maxCoeff());
        }
        CHECK(best == doctest::Approx(inf_induced_norm(op)).epsilon(1e-12));
    }
}

TEST_CASE("convolution") {
    const FirOperator p = convolve(scalar_fir({1.0, 2.0}), scalar_fir({3.0, 4.0}));
    REQUIRE(p.horizon() == 4);
    CHECK(p.tap(1)(0, 0) == 0.0);
    CHECK(p.tap(2)(0, 0) == 3.0);
    CHECK(p.tap(3)(0, 0) == 10.0);
    CHECK(p.tap(4)(0, 0) == 8.0);

    const FirOperator b = random_fir(2, 3, 3);
    const FirOperator shifted = convolve(FirOperator({MatrixXd::Identity(2, 2)}), b, 4);
    CHECK(shifted.tap(1).isZero());
    for (int t = 1; t <= 3; ++t) CHECK(shifted.tap(t + 1) == b.tap(t));

    CHECK_THROWS_AS(convolve(random_fir(2, 3, 2), random_fir(2, 3, 2)), DimensionError);
}

TEST_CASE("convolution composes signal application") {
    const FirOperator a = random_fir(2, 3, 4), b = random_fir(3, 2, 5);
    const Signal s = random_matrix(2, 15);
    const Signal lhs = signal_apply(convolve(a, b, 20), s);
    const Signal rhs = signal_apply(a, signal_apply(b, s));
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("norm is sub-multiplicative") {
    for (int trial = 0; trial < 20; ++trial) {
        const FirOperator a = random_fir(3, 2, 3), b = random_fir(2, 4, 4);
        CHECK(inf_induced_norm(convolve(a, b)) <= inf_induced_norm(a) * inf_induced_norm(b) + 1e-12);
    }
}

TEST_CASE("signal application") {
    const FirOperator op = random_fir(2, 3, 4);
    Signal impulse = Signal::Zero(3, 6);
    impulse(1, 0) = 1.0;
    const Signal y = signal_apply(op, impulse);
    CHECK(y.col(0).isZero());
    for (int t = 1; t <= 4; ++t) CHECK(y.col(t) == op.tap(t).col(1));
    CHECK(y.col(5).isZero());

    CHECK(signal_apply(op, Signal::Zero(3, 7)).isZero());

    const Signal s1 = random_matrix(3, 12), s2 = random_matrix(3, 12);
    CHECK((signal_apply(op, s1) - apply_oracle(op, s1)).cwiseAbs().maxCoeff() <= 1e-13);
    CHECK((signal_apply(op, 2.0 * s1 + s2) - 2.0 * signal_apply(op, s1) - signal_apply(op, s2)).cwiseAbs().maxCoeff() <=
          1e-12);
    CHECK_THROWS_AS(signal_apply(op, Signal::Zero(2, 4)), DimensionError);
}

TEST_CASE("deconvolution") {
    const auto g0 = solve_deconvolution(scalar_fir({1.0, 0.5}), scalar_fir({0.0, 0.0}), 3);
    for (const auto& g : g0) CHECK(g.isZero());

    const auto g = solve_deconvolution(scalar_fir({1.0, 0.5}), scalar_fir({0.0, 1.0}), 4);
    REQUIRE(g.size() == 4);
    CHECK(g[0](0, 0) == 0.0);
    CHECK(g[1](0, 0) == 1.0);
    CHECK(g[2](0, 0) == -0.5);
    CHECK(g[3](0, 0) == 0.25);

    CHECK_THROWS(solve_deconvolution(scalar_fir({1.1, 0.5}), scalar_fir({0.0, 1.0}), 4));
}

TEST_CASE("deconvolution is a left inverse up to the horizon") {
    std::vector<MatrixXd> xw{MatrixXd::Identity(3, 3)};
    for (int t = 0; t < 4; ++t) xw.push_back(0.3 * random_matrix(3, 3));
    const FirOperator phi_xw(xw);
    const FirOperator x = random_fir(3, 2, 5);
    const int T = 8;
    const auto g = solve_deconvolution(phi_xw, x, T);
    // G has taps 0..T-1, i.e. phi_xw * G read as a strictly proper product.
    for (int t = 1; t <= T; ++t) {
        MatrixXd acc = MatrixXd::Zero(3, 2);
        for (int j = 1; j <= std::min(t, phi_xw.horizon()); ++j) acc += phi_xw.tap(j) * g[static_cast<std::size_t>(t - j)];
        const MatrixXd want = t <= x.horizon() ? x.tap(t) : MatrixXd::Zero(3, 2);
        CHECK((acc - want).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("controller realization") {
    SystemResponses r;
    r.phi_xw = FirOperator({MatrixXd::Identity(2, 2), 0.2 * random_matrix(2, 2)});
    r.phi_xe = random_fir(2, 2, 2);
    r.phi_uw = FirOperator(1, 2, 2);
    r.phi_ue = random_fir(1, 2, 2);
    const FirController k = realize_controller(r, 4);
    REQUIRE(k.gain.horizon() == 4);
    CHECK(k.gain.tap(1) == r.phi_ue.tap(1));
    CHECK(k.gain.tap(2) == r.phi_ue.tap(2));
    CHECK(k.gain.tap(3).isZero());
    CHECK(k.truncation_tail == 0.0);
}

TEST_CASE("controller step and measurement history") {
    FirController k;
    k.gain = FirOperator({MatrixXd::Identity(2, 2)});
    MeasurementHistory h(2, 1);
    CHECK(controller_step(k, h).isZero());
    h.push(VectorXd::Unit(2, 0));
    CHECK(controller_step(k, h) == VectorXd::Unit(2, 0));

    k.gain = random_fir(2, 3, 5);
    MeasurementHistory hist(3, 5);
    const Signal y = random_matrix(3, 12);
    const Signal expect = signal_apply(k.gain, y);
    const FirControllerKernel kernel(k);
    for (Eigen::Index t = 0; t < 12; ++t) {
        CHECK((controller_step(k, hist) - expect.col(t)).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((kernel.evaluate(hist) - expect.col(t)).cwiseAbs().maxCoeff() <= 1e-12);
        hist.push(y.col(t));
    }
    CHECK(hist.lag(1) == y.col(11));
    CHECK(hist.lag(5) == y.col(7));
    hist.clear();
    CHECK(controller_step(k, hist).isZero());
    CHECK_THROWS_AS(controller_step(k, MeasurementHistory(2, 5)), DimensionError);
}

TEST_CASE("response shape checks") {
    SystemResponses r;
    r.phi_xw = FirOperator(3, 3, 4);
    r.phi_xe = FirOperator(3, 2, 4);
    r.phi_uw = FirOperator(1, 3, 4);
    r.phi_ue = FirOperator(1, 2, 4);
    CHECK_NOTHROW(r.check_shapes(3, 1, 2));
    CHECK_THROWS_AS(r.check_shapes(3, 2, 2), DimensionError);
    r.phi_ue = FirOperator(1, 2, 5);
    CHECK_THROWS_AS(r.check_shapes(3, 1, 2), DimensionError);
}
