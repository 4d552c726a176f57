#include "sls_robust/reference.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sls {

void CircleReference::validate() const {
    if (!(radius >= 0.0) || !std::isfinite(radius)) throw std::invalid_argument("reference radius must be >= 0");
    if (!(period > 0.0) || !std::isfinite(period)) throw std::invalid_argument("reference period must be > 0");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("reference dt must be > 0");
    if (!std::isfinite(height)) throw std::invalid_argument("reference height must be finite");
    if (laps < 0) throw std::invalid_argument("reference laps must be >= 0");
}

int CircleReference::steps() const { return static_cast<int>(std::lround(laps * period / dt)); }

Eigen::VectorXd hover_trim(const QuadrotorParams& params) { return Eigen::Vector3d(0.0, 0.0, params.mass * params.g); }

ReferencePoint reference_signal(const CircleReference& ref, const QuadrotorParams& params, int k) {
    if (k < 0) throw std::invalid_argument("reference step must be >= 0");
    const double w = 2.0 * std::numbers::pi / ref.period;
    const double half = 0.5 * w * ref.dt;
    const double speed = ref.radius * std::tan(half) / (0.5 * ref.dt);

    auto velocity = [&](int j) {
        const double th = w * ref.dt * j;
        return Eigen::Vector2d(-speed * std::sin(th), speed * std::cos(th));
    };
    const double th = w * ref.dt * k;
    ReferencePoint pt;
    pt.x_ref.resize(6);
    const Eigen::Vector2d v = velocity(k);
    pt.x_ref << ref.radius * std::cos(th), ref.radius * std::sin(th), ref.height, v.x(), v.y(), 0.0;
    const Eigen::Vector2d a = (velocity(k + 1) - v) / ref.dt;
    pt.u_ff = hover_trim(params);
    pt.u_ff(0) = -a.x() / params.g;
    pt.u_ff(1) = a.y() / params.g;
    return pt;
}

}  // namespace sls
