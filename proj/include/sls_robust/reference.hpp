#pragma once

#include <Eigen/Dense>

#include "sls_robust/lti_model.hpp"

namespace sls {

// Constant-height circle flown counter-clockwise from (radius, 0, height).
struct CircleReference {
    double radius = 1.0;  // m
    double period = 10.0; // s
    double height = 1.0;  // m
    double dt = 0.1;      // s
    int laps = 3;

    void validate() const;
    int steps() const;  // samples covering every lap
};

struct ReferencePoint {
    Eigen::VectorXd x_ref;  // (position, velocity)
    Eigen::VectorXd u_ff;   // (pitch, roll, thrust) including hover trim
};

// Velocities are scaled by tan(w dt / 2) / (w dt / 2) so that the sampled
// circle is an exact trajectory of the zero-order-hold model.
ReferencePoint reference_signal(const CircleReference& ref, const QuadrotorParams& params, int k);

Eigen::VectorXd hover_trim(const QuadrotorParams& params);

}  // namespace sls
