#pragma once

#include <Eigen/Dense>

namespace sls {

// x' = A x + B u + H w,  y = C x.
struct ContinuousLtiSystem {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
    Eigen::MatrixXd C;
    Eigen::MatrixXd H;

    void validate() const;
};

// x[k+1] = A x[k] + B u[k] + H w[k],  y[k] = C x[k] + e[k].
struct DiscreteLtiSystem {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
    Eigen::MatrixXd C;
    Eigen::MatrixXd H;
    double dt = 0.0;

    Eigen::Index states() const { return A.rows(); }
    Eigen::Index inputs() const { return B.cols(); }
    Eigen::Index outputs() const { return C.rows(); }
    Eigen::Index disturbances() const { return H.cols(); }

    void validate() const;
};

struct QuadrotorParams {
    double mass = 0.256;  // kg
    double g = 9.81;      // m/s^2

    void validate() const;
};

// Position/velocity model linearized about hover with yaw held at zero.
// State (x, y, z, vx, vy, vz); input (pitch, roll, thrust deviation).
ContinuousLtiSystem quadrotor_hover_model(const QuadrotorParams& params);

// Exact zero-order-hold discretization. H is held over the sample like B.
DiscreteLtiSystem discretize(const ContinuousLtiSystem& sys, double dt);

Eigen::VectorXd step(const DiscreteLtiSystem& sys, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& u, const Eigen::VectorXd& w);

// Matrix exponential by scaling and squaring with a [6/6] Pade approximant.
Eigen::MatrixXd expm(const Eigen::MatrixXd& m);

}  // namespace sls
