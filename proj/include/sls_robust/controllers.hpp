#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>

#include "sls_robust/fir.hpp"
#include "sls_robust/lti_model.hpp"

namespace sls {

// Feedback on tracking-error measurements y - C x_ref. compute() receives
// the newest measurement and returns the input deviation from feedforward.
class Controller {
public:
    virtual ~Controller() = default;
    virtual void reset() = 0;
    virtual Eigen::VectorXd compute(const Eigen::VectorXd& y_tilde) = 0;
    virtual std::string name() const = 0;
    virtual std::unique_ptr<Controller> clone() const = 0;
};

// u_k = sum_t K(t) y_{k-t}; the measurement passed to compute() only
// enters from the next step on.
class FirFeedback final : public Controller {
public:
    explicit FirFeedback(const FirController& ctrl, std::string name = "fir");
    void reset() override;
    Eigen::VectorXd compute(const Eigen::VectorXd& y_tilde) override;
    std::string name() const override { return name_; }
    std::unique_ptr<Controller> clone() const override;

private:
    FirController ctrl_;
    FirControllerKernel kernel_;
    MeasurementHistory history_;
    std::string name_;
};

// Exact realization of K = Phi_ue - Phi_uw Phi_xw^{-1} Phi_xe without
// truncation: eta solves Phi_xw eta = Phi_xe y recursively and
// u = Phi_ue y - Phi_uw eta. Every closed-loop map stays FIR.
class SlsFeedback final : public Controller {
public:
    explicit SlsFeedback(const SystemResponses& resp, std::string name = "sls");
    void reset() override;
    Eigen::VectorXd compute(const Eigen::VectorXd& y_tilde) override;
    std::string name() const override { return name_; }
    std::unique_ptr<Controller> clone() const override;

private:
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    SystemResponses resp_;
    RowMajor ue_, uw_, xe_, xw_tail_;
    MeasurementHistory y_hist_;
    MeasurementHistory eta_hist_;
    std::string name_;
};

struct PdGains {
    Eigen::Vector3d kp = Eigen::Vector3d::Constant(4.0);  // 1/s^2
    Eigen::Vector3d kd = Eigen::Vector3d::Constant(3.0);  // 1/s

    void validate() const;
};

// a = kp (p_ref - p) + kd (v_ref - v), mapped through the inverse hover
// input map: pitch = -a_x / g, roll = a_y / g, thrust = m a_z.
class PdController final : public Controller {
public:
    PdController(PdGains gains, QuadrotorParams params);
    void reset() override {}
    Eigen::VectorXd compute(const Eigen::VectorXd& y_tilde) override;
    std::string name() const override { return "pd"; }
    std::unique_ptr<Controller> clone() const override;

    // Absolute command at hover given the tracking error; trim included.
    Eigen::Vector3d command(const Eigen::VectorXd& y_tilde) const;

private:
    Eigen::Vector3d deviation(const Eigen::VectorXd& y_tilde) const;

    PdGains gains_;
    QuadrotorParams params_;
};

// Takes the thrust channel from the PD controller and the rest from `primary`.
class ZAxisPdMix final : public Controller {
public:
    ZAxisPdMix(std::unique_ptr<Controller> primary, PdController pd);
    void reset() override;
    Eigen::VectorXd compute(const Eigen::VectorXd& y_tilde) override;
    std::string name() const override;
    std::unique_ptr<Controller> clone() const override;

private:
    std::unique_ptr<Controller> primary_;
    PdController pd_;
};

}  // namespace sls
