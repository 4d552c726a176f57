#include "sls_robust/lti_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "sls_robust/errors.hpp"

namespace sls {

namespace {

void require_finite(const Eigen::MatrixXd& m, const char* name) {
    if (!m.allFinite()) throw std::invalid_argument(std::string(name) + " has non-finite entries");
}

void check_shapes(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& C,
                  const Eigen::MatrixXd& H) {
    const auto n = A.rows();
    if (n == 0 || A.cols() != n) throw DimensionError("A must be square and non-empty");
    if (B.rows() != n) throw DimensionError("B row count must match A");
    if (C.cols() != n) throw DimensionError("C column count must match A");
    if (H.rows() != n) throw DimensionError("H row count must match A");
    require_finite(A, "A");
    require_finite(B, "B");
    require_finite(C, "C");
    require_finite(H, "H");
}

}  // namespace

void ContinuousLtiSystem::validate() const { check_shapes(A, B, C, H); }

void DiscreteLtiSystem::validate() const {
    check_shapes(A, B, C, H);
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be positive");
}

void QuadrotorParams::validate() const {
    if (!(mass > 0.0) || !std::isfinite(mass)) throw std::invalid_argument("mass must be positive");
    if (!(g > 0.0) || !std::isfinite(g)) throw std::invalid_argument("g must be positive");
}

ContinuousLtiSystem quadrotor_hover_model(const QuadrotorParams& params) {
    params.validate();
    ContinuousLtiSystem sys;
    sys.A = Eigen::MatrixXd::Zero(6, 6);
    sys.A.topRightCorner(3, 3).setIdentity();
    sys.B = Eigen::MatrixXd::Zero(6, 3);
    sys.B(3, 0) = -params.g;
    sys.B(4, 1) = params.g;
    sys.B(5, 2) = 1.0 / params.mass;
    sys.C = Eigen::MatrixXd::Identity(6, 6);
    sys.H = Eigen::MatrixXd::Identity(6, 6);
    return sys;
}

Eigen::MatrixXd expm(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols()) throw DimensionError("expm needs a square matrix");
    const auto n = m.rows();
    if (n == 0) return m;

    const double norm = m.cwiseAbs().colwise().sum().maxCoeff();
    int squarings = 0;
    if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
    const Eigen::MatrixXd scaled = m / std::ldexp(1.0, squarings);

    // c_k = (2q-k)! q! / ((2q)! k! (q-k)!), q = 6
    constexpr int q = 6;
    double c = 1.0;
    Eigen::MatrixXd power = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd num = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd den = Eigen::MatrixXd::Identity(n, n);
    for (int k = 1; k <= q; ++k) {
        c *= static_cast<double>(q - k + 1) / static_cast<double>(k * (2 * q - k + 1));
        power = power * scaled;
        num += c * power;
        den += ((k % 2 == 0) ? c : -c) * power;
    }
    Eigen::MatrixXd result = den.partialPivLu().solve(num);
    for (int i = 0; i < squarings; ++i) result = result * result;
    return result;
}

DiscreteLtiSystem discretize(const ContinuousLtiSystem& sys, double dt) {
    sys.validate();
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be positive");

    const auto n = sys.A.rows();
    const auto m = sys.B.cols();
    const auto d = sys.H.cols();

    // exp([[A, B, H], [0, 0, 0]] dt) = [[Ad, Bd, Hd], [0, I, 0]]
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + m + d, n + m + d);
    aug.topLeftCorner(n, n) = sys.A;
    aug.block(0, n, n, m) = sys.B;
    aug.block(0, n + m, n, d) = sys.H;
    const Eigen::MatrixXd e = expm(aug * dt);

    DiscreteLtiSystem out;
    out.A = e.topLeftCorner(n, n);
    out.B = e.block(0, n, n, m);
    out.H = e.block(0, n + m, n, d);
    out.C = sys.C;
    out.dt = dt;
    return out;
}

Eigen::VectorXd step(const DiscreteLtiSystem& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                     const Eigen::VectorXd& w) {
    if (x.size() != sys.states() || u.size() != sys.inputs() || w.size() != sys.disturbances()) {
        throw DimensionError("step: state, input or disturbance size does not match the system");
    }
    return sys.A * x + sys.B * u + sys.H * w;
}

}  // namespace sls
