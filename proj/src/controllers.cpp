#include "sls_robust/controllers.hpp"

#include <cmath>
#include <stdexcept>

#include "sls_robust/errors.hpp"

namespace sls {

FirFeedback::FirFeedback(const FirController& ctrl, std::string name)
    : ctrl_(ctrl),
      kernel_(ctrl),
      history_(ctrl.gain.cols(), std::max(1, ctrl.gain.horizon())),
      name_(std::move(name)) {}

void FirFeedback::reset() { history_.clear(); }

Eigen::VectorXd FirFeedback::compute(const Eigen::VectorXd& y_tilde) {
    if (y_tilde.size() != history_.dim()) throw DimensionError("FIR controller: measurement dimension mismatch");
    Eigen::VectorXd u = kernel_.evaluate(history_);
    history_.push(y_tilde);
    return u;
}

std::unique_ptr<Controller> FirFeedback::clone() const { return std::make_unique<FirFeedback>(ctrl_, name_); }

namespace {

// Row-major [op(first) ... op(T)].
Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> stack_from(const FirOperator& op, int first) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(op.rows(),
                                                                              op.cols() * (op.horizon() - first + 1));
    for (int t = first; t <= op.horizon(); ++t) out.middleCols((t - first) * op.cols(), op.cols()) = op.tap(t);
    return out;
}

Eigen::Map<const Eigen::VectorXd> window(const MeasurementHistory& h, int taps) {
    return Eigen::Map<const Eigen::VectorXd>(h.window(), h.dim() * taps);
}

}  // namespace

SlsFeedback::SlsFeedback(const SystemResponses& resp, std::string name)
    : resp_(resp),
      ue_(stack_from(resp.phi_ue, 1)),
      uw_(stack_from(resp.phi_uw, 1)),
      xe_(stack_from(resp.phi_xe, 1)),
      xw_tail_(stack_from(resp.phi_xw, 2)),
      y_hist_(resp.phi_xe.cols(), std::max(1, resp.horizon())),
      eta_hist_(resp.phi_xw.cols(), std::max(1, resp.horizon())),
      name_(std::move(name)) {
    resp.check_shapes(resp.phi_xw.rows(), resp.phi_uw.rows(), resp.phi_xe.cols());
    if (resp.horizon() < 1) throw std::invalid_argument("SLS controller needs at least one tap");
    const Eigen::MatrixXd& first = resp.phi_xw.tap(1);
    if ((first - Eigen::MatrixXd::Identity(first.rows(), first.cols())).cwiseAbs().maxCoeff() > 1e-9) {
        throw std::invalid_argument("SLS controller: first tap of phi_xw must be the identity");
    }
}

void SlsFeedback::reset() {
    y_hist_.clear();
    eta_hist_.clear();
}

Eigen::VectorXd SlsFeedback::compute(const Eigen::VectorXd& y_tilde) {
    if (y_tilde.size() != y_hist_.dim()) throw DimensionError("SLS controller: measurement dimension mismatch");
    const int T = resp_.horizon();
    const Eigen::VectorXd u = ue_ * window(y_hist_, T) - uw_ * window(eta_hist_, T);
    y_hist_.push(y_tilde);
    Eigen::VectorXd eta = xe_ * window(y_hist_, T);
    if (T > 1) eta -= xw_tail_ * window(eta_hist_, T - 1);
    eta_hist_.push(eta);
    return u;
}

std::unique_ptr<Controller> SlsFeedback::clone() const { return std::make_unique<SlsFeedback>(resp_, name_); }

void PdGains::validate() const {
    if (!kp.allFinite() || !kd.allFinite()) throw std::invalid_argument("PD gains must be finite");
}

PdController::PdController(PdGains gains, QuadrotorParams params) : gains_(std::move(gains)), params_(params) {
    gains_.validate();
    params_.validate();
}

Eigen::VectorXd PdController::compute(const Eigen::VectorXd& y_tilde) { return deviation(y_tilde); }

Eigen::Vector3d PdController::deviation(const Eigen::VectorXd& y_tilde) const {
    if (y_tilde.size() != 6) throw DimensionError("PD controller expects a 6-dimensional measurement");
    const Eigen::Vector3d a = -(gains_.kp.cwiseProduct(y_tilde.head<3>()) + gains_.kd.cwiseProduct(y_tilde.tail<3>()));
    return Eigen::Vector3d(-a.x() / params_.g, a.y() / params_.g, params_.mass * a.z());
}

Eigen::Vector3d PdController::command(const Eigen::VectorXd& y_tilde) const {
    Eigen::Vector3d u = deviation(y_tilde);
    u.z() += params_.mass * params_.g;
    return u;
}

std::unique_ptr<Controller> PdController::clone() const { return std::make_unique<PdController>(*this); }

ZAxisPdMix::ZAxisPdMix(std::unique_ptr<Controller> primary, PdController pd)
    : primary_(std::move(primary)), pd_(std::move(pd)) {
    if (!primary_) throw std::invalid_argument("z-axis mix needs a primary controller");
}

void ZAxisPdMix::reset() {
    primary_->reset();
    pd_.reset();
}

Eigen::VectorXd ZAxisPdMix::compute(const Eigen::VectorXd& y_tilde) {
    Eigen::VectorXd u = primary_->compute(y_tilde);
    u(2) = pd_.compute(y_tilde)(2);
    return u;
}

std::string ZAxisPdMix::name() const { return primary_->name() + "+pd_z"; }

std::unique_ptr<Controller> ZAxisPdMix::clone() const {
    return std::make_unique<ZAxisPdMix>(primary_->clone(), pd_);
}

}  // namespace sls
