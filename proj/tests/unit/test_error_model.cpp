#include <algorithm>
#include <numeric>
#include <random>

#include "doctest.h"
#include "sls_robust/error_model.hpp"
#include "sls_robust/errors.hpp"
#include "sls_robust/perception.hpp"

using namespace sls;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

TrajectoryDataset make_dataset(const MatrixXd& states, const MatrixXd& measurements) {
    TrajectoryDataset d;
    d.states = states;
    d.measurements = measurements;
    d.times.resize(static_cast<std::size_t>(states.cols()));
    std::iota(d.times.begin(), d.times.end(), 0.0);
    return d;
}

// Exhaustive pairwise slope with the same admissibility rule.
double pairwise_oracle(const MatrixXd& x, const MatrixXd& e, double r) {
    double best = 0.0;
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            const double dx = (x.col(i) - x.col(j)).cwiseAbs().maxCoeff();
            if (dx <= 0.0 || dx >= r) continue;
            best = std::max(best, (e.col(i) - e.col(j)).cwiseAbs().maxCoeff() / dx);
        }
    }
    return best;
}

MatrixXd random_states(std::mt19937_64& rng, Eigen::Index n, Eigen::Index count, double spread) {
    std::uniform_real_distribution<double> u(-spread, spread);
    return MatrixXd::NullaryExpr(n, count, [&] { return u(rng); });
}

}  // namespace

TEST_CASE("residuals") {
    const MatrixXd x = MatrixXd::Random(3, 5);
    const MatrixXd c = MatrixXd::Random(2, 3);
    CHECK(residuals(make_dataset(x, c * x), c).cwiseAbs().maxCoeff() <= 1e-15);

    MatrixXd xs = MatrixXd::Zero(6, 2), ys = MatrixXd::Zero(6, 2);
    xs(0, 0) = 1.0;
    ys(0, 0) = 1.1;
    const MatrixXd e = residuals(make_dataset(xs, ys), MatrixXd::Identity(6, 6));
    CHECK(e(0, 0) == doctest::Approx(0.1));
    CHECK(e.col(1).isZero());

    const MatrixXd y = MatrixXd::Random(2, 5);
    const MatrixXd r = residuals(make_dataset(x, y), c);
    for (Eigen::Index k = 0; k < 5; ++k) {
        for (Eigen::Index i = 0; i < 2; ++i) {
            double cx = 0.0;
            for (Eigen::Index j = 0; j < 3; ++j) cx += c(i, j) * x(j, k);
            CHECK(r(i, k) == doctest::Approx(y(i, k) - cx).epsilon(1e-14));
        }
    }
    CHECK_THROWS_AS(residuals(make_dataset(x, y), MatrixXd::Identity(3, 3)), DimensionError);
}

TEST_CASE("nearest-rank quantile and epsilon bound") {
    CHECK(epsilon_bound(MatrixXd{{0.1, 0.05}, {-0.2, 0.15}}, 1.0) == 0.2);
    CHECK(epsilon_bound(MatrixXd::Zero(3, 4), 1.0) == 0.0);

    std::vector<double> v;
    for (int k = 1; k <= 100; ++k) v.push_back(0.01 * k);
    std::shuffle(v.begin(), v.end(), std::mt19937_64(4));
    CHECK(nearest_rank_quantile(v, 0.95) == doctest::Approx(0.95).epsilon(1e-15));
    CHECK(nearest_rank_quantile(v, 1.0) == doctest::Approx(1.0));
    CHECK(nearest_rank_quantile(v, 0.001) == doctest::Approx(0.01));

    MatrixXd e(1, 100);
    for (int k = 0; k < 100; ++k) e(0, k) = (k % 2 ? -1.0 : 1.0) * 0.01 * (k + 1);
    CHECK(epsilon_bound(e, 0.95) == doctest::Approx(0.95).epsilon(1e-15));

    CHECK_THROWS(nearest_rank_quantile({}, 0.5));
    CHECK_THROWS(nearest_rank_quantile({1.0}, 0.0));
    CHECK_THROWS(nearest_rank_quantile({1.0}, 1.5));
    CHECK_THROWS(epsilon_bound(MatrixXd(2, 0), 1.0));
}

TEST_CASE("epsilon bound dominates every residual at q = 1") {
    std::mt19937_64 rng(9);
    const MatrixXd e = random_states(rng, 4, 300, 2.0);
    const double eps = epsilon_bound(e, 1.0);
    for (Eigen::Index k = 0; k < e.cols(); ++k) CHECK(e.col(k).cwiseAbs().maxCoeff() <= eps);
}

TEST_CASE("s-slope small oracles") {
    const MatrixXd x{{0.0, 1.0, 3.0}};
    CHECK(s_slope(x, MatrixXd{{0.0, 0.3, 0.3}}, 2.5, 1.0).value() == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(s_slope(x, MatrixXd::Constant(1, 3, 0.7), 10.0, 1.0).value() == 0.0);

    MatrixXd grid(1, 11), lin(1, 11);
    for (int k = 0; k <= 10; ++k) {
        grid(0, k) = 0.2 * k;
        lin(0, k) = 0.5 * grid(0, k);
    }
    for (double r : {0.25, 1.0, 5.0}) CHECK(s_slope(grid, lin, r, 1.0).value() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("no neighbors is a distinct result") {
    const MatrixXd x{{0.0, 1.0, 3.0}};
    const MatrixXd e{{0.0, 0.3, 0.3}};
    CHECK_FALSE(s_slope(x, e, 0.5, 1.0).has_value());
    // Identical states are not a pair.
    CHECK_FALSE(s_slope(MatrixXd::Zero(2, 4), MatrixXd::Random(2, 4), 1.0, 1.0).has_value());
    const auto data = make_dataset(x, e);
    CHECK_THROWS_AS(fit(data, MatrixXd::Zero(1, 1), 0.5, 1.0, 1.0), NoNeighborsError);
}

TEST_CASE("s-slope equals the exhaustive oracle on small datasets") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 6; ++trial) {
        const Eigen::Index count = 50 + 90 * trial;
        const MatrixXd x = random_states(rng, 3, count, 1.0);
        const MatrixXd e = random_states(rng, 2, count, 0.1);
        for (double r : {0.3, 0.8, 3.0}) {
            const double oracle = pairwise_oracle(x, e, r);
            CHECK(s_slope(x, e, r, 1.0).value() == oracle);
        }
    }
}

TEST_CASE("s-slope properties") {
    std::mt19937_64 rng(33);
    const MatrixXd x = random_states(rng, 2, 120, 1.0);
    const MatrixXd e = random_states(rng, 2, 120, 0.05);

    double prev = 0.0;
    for (double r : {0.1, 0.2, 0.4, 0.8, 1.6, 3.2}) {
        const double s = s_slope(x, e, r, 1.0).value();
        CHECK(s >= prev);
        prev = s;
    }

    std::vector<Eigen::Index> perm(120);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    MatrixXd xp(2, 120), ep(2, 120);
    for (Eigen::Index k = 0; k < 120; ++k) {
        xp.col(k) = x.col(perm[static_cast<std::size_t>(k)]);
        ep.col(k) = e.col(perm[static_cast<std::size_t>(k)]);
    }
    for (double q : {0.5, 0.95, 1.0}) CHECK(s_slope(xp, ep, 0.7, q).value() == s_slope(x, e, 0.7, q).value());

    CHECK(s_slope(x, e, 0.7, 0.5).value() <= s_slope(x, e, 0.7, 0.95).value());
    CHECK(s_slope(x, e, 0.7, 0.95).value() <= s_slope(x, e, 0.7, 1.0).value());
}

TEST_CASE("fit on perfect perception") {
    std::mt19937_64 rng(2);
    const MatrixXd x = random_states(rng, 6, 40, 1.0);
    const ErrorModel m = fit(make_dataset(x, x), MatrixXd::Identity(6, 6), 2.0, 1.0, 0.95);
    CHECK(m.epsilon_e == 0.0);
    CHECK(m.s_hat == 0.0);
    CHECK(m.s_hat_max == 0.0);
    CHECK(m.radius_r == 2.0);
    CHECK(m.pair_count > 0);
    CHECK(m.training_states == x);
    CHECK_NOTHROW(m.validate());
}

TEST_CASE("fit recovers the Lipschitz bias of synthetic perception") {
    SyntheticPerceptionModel pm;
    pm.bias_amplitudes = VectorXd::Constant(2, 0.1);
    pm.bias_frequencies = VectorXd::Constant(2, 2.0);
    pm.directions = MatrixXd{{1.0, 0.0}, {0.0, 1.0}};
    pm.phases = VectorXd{{0.3, 1.1}};
    const double lip = pm.lipschitz();
    CHECK(lip == doctest::Approx(0.2));

    // Dense scalar sweep along each axis: slope approaches L from below.
    MatrixXd x(2, 401), y(2, 401);
    for (int k = 0; k <= 400; ++k) {
        x.col(k) = VectorXd{{-2.0 + 0.01 * k, 0.5 * std::sin(0.05 * k)}};
        y.col(k) = perceive(pm, MatrixXd::Identity(2, 2), x.col(k), k);
    }
    const ErrorModel m = fit(make_dataset(x, y), MatrixXd::Identity(2, 2), 0.5, 1.0, 1.0);
    CHECK(m.s_hat <= lip + 1e-12);
    CHECK(m.s_hat >= 0.9 * lip);
    CHECK(m.epsilon_e <= pm.error_bound());

    pm.noise_amplitude = 1e-3;
    pm.seed = 3;
    MatrixXd yn(2, 401);
    for (int k = 0; k <= 400; ++k) yn.col(k) = perceive(pm, MatrixXd::Identity(2, 2), x.col(k), k);
    const ErrorModel noisy = fit(make_dataset(x, yn), MatrixXd::Identity(2, 2), 0.5, 1.0, 1.0);
    double min_dist = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
        for (Eigen::Index j = i + 1; j < x.cols(); ++j) {
            const double d = (x.col(i) - x.col(j)).cwiseAbs().maxCoeff();
            if (d > 0.0 && d < 0.5) min_dist = std::min(min_dist, d);
        }
    }
    CHECK(noisy.s_hat <= lip + 2.0 * pm.noise_amplitude / min_dist + 1e-12);
}
