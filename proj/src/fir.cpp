#include "sls_robust/fir.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "sls_robust/errors.hpp"
#include "sls_robust/kernels.hpp"

namespace sls {

FirOperator::FirOperator(Eigen::Index rows, Eigen::Index cols, int horizon) : rows_(rows), cols_(cols) {
    if (horizon < 1) throw std::invalid_argument("FIR horizon must be at least 1");
    taps_.assign(static_cast<std::size_t>(horizon), Eigen::MatrixXd::Zero(rows, cols));
}

FirOperator::FirOperator(std::vector<Eigen::MatrixXd> taps) : taps_(std::move(taps)) {
    if (taps_.empty()) throw std::invalid_argument("FIR operator needs at least one tap");
    rows_ = taps_.front().rows();
    cols_ = taps_.front().cols();
    for (const auto& t : taps_) {
        if (t.rows() != rows_ || t.cols() != cols_) throw DimensionError("FIR taps must share dimensions");
    }
}

const Eigen::MatrixXd& FirOperator::tap(int t) const {
    if (t < 1 || t > horizon()) throw std::out_of_range("FIR tap index " + std::to_string(t) + " out of range");
    return taps_[static_cast<std::size_t>(t - 1)];
}

Eigen::MatrixXd& FirOperator::tap(int t) {
    if (t < 1 || t > horizon()) throw std::out_of_range("FIR tap index " + std::to_string(t) + " out of range");
    return taps_[static_cast<std::size_t>(t - 1)];
}

Eigen::MatrixXd FirOperator::stacked() const {
    Eigen::MatrixXd out(rows_, cols_ * horizon());
    for (int t = 0; t < horizon(); ++t) out.middleCols(t * cols_, cols_) = taps_[static_cast<std::size_t>(t)];
    return out;
}

bool FirOperator::is_zero() const {
    return std::all_of(taps_.begin(), taps_.end(), [](const Eigen::MatrixXd& m) { return m.isZero(0.0); });
}

void SystemResponses::check_shapes(Eigen::Index n, Eigen::Index m, Eigen::Index p) const {
    const int T = horizon();
    auto check = [&](const FirOperator& op, Eigen::Index r, Eigen::Index c, const char* name) {
        if (op.rows() != r || op.cols() != c || op.horizon() != T) {
            throw DimensionError(std::string("system response ") + name + " has inconsistent shape");
        }
    };
    check(phi_xw, n, n, "phi_xw");
    check(phi_xe, n, p, "phi_xe");
    check(phi_uw, m, n, "phi_uw");
    check(phi_ue, m, p, "phi_ue");
}

double inf_induced_norm(const FirOperator& op) {
    if (op.horizon() == 0) return 0.0;
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = op.stacked();
    double best = 0.0;
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        best = std::max(best, kernels::abs_sum({rows.row(i).data(), static_cast<std::size_t>(rows.cols())}));
    }
    return best;
}

FirOperator convolve(const FirOperator& a, const FirOperator& b, int horizon) {
    if (a.cols() != b.rows()) throw DimensionError("convolve: inner dimensions differ");
    FirOperator out(a.rows(), b.cols(), horizon);
    for (int i = 1; i <= a.horizon(); ++i) {
        for (int j = 1; j <= b.horizon(); ++j) {
            if (i + j > horizon) break;
            out.tap(i + j).noalias() += a.tap(i) * b.tap(j);
        }
    }
    return out;
}

FirOperator convolve(const FirOperator& a, const FirOperator& b) {
    return convolve(a, b, a.horizon() + b.horizon());
}

Signal signal_apply(const FirOperator& op, const Signal& signal) {
    if (signal.rows() != op.cols()) throw DimensionError("signal_apply: signal dimension does not match operator");
    Signal out = Signal::Zero(op.rows(), signal.cols());
    for (Eigen::Index k = 1; k < signal.cols(); ++k) {
        const int reach = static_cast<int>(std::min<Eigen::Index>(k, op.horizon()));
        for (int t = 1; t <= reach; ++t) out.col(k).noalias() += op.tap(t) * signal.col(k - t);
    }
    return out;
}

std::vector<Eigen::MatrixXd> solve_deconvolution(const FirOperator& phi_xw, const FirOperator& phi_xe, int t_out) {
    if (phi_xw.rows() != phi_xw.cols()) throw DimensionError("deconvolution: phi_xw must be square");
    if (phi_xe.rows() != phi_xw.rows()) throw DimensionError("deconvolution: phi_xe rows must match phi_xw");
    if (t_out < 1) throw std::invalid_argument("deconvolution: output horizon must be positive");
    const auto n = phi_xw.rows();
    if ((phi_xw.tap(1) - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() > 1e-9) {
        throw std::invalid_argument("deconvolution: first tap of phi_xw is not the identity");
    }

    std::vector<Eigen::MatrixXd> g;
    g.reserve(static_cast<std::size_t>(t_out));
    for (int k = 0; k < t_out; ++k) {
        Eigen::MatrixXd gk = (k + 1 <= phi_xe.horizon()) ? phi_xe.tap(k + 1)
                                                          : Eigen::MatrixXd::Zero(n, phi_xe.cols());
        for (int j = 1; j <= k && j + 1 <= phi_xw.horizon(); ++j) {
            gk.noalias() -= phi_xw.tap(j + 1) * g[static_cast<std::size_t>(k - j)];
        }
        g.push_back(std::move(gk));
    }
    return g;
}

FirController realize_controller(const SystemResponses& resp, int t_k) {
    if (t_k < 1) throw std::invalid_argument("controller horizon must be positive");
    resp.check_shapes(resp.phi_xw.rows(), resp.phi_uw.rows(), resp.phi_xe.cols());

    // Taps past t_k are computed up to 2 t_k only to measure what truncation drops.
    const int full = 2 * t_k;
    const auto g = solve_deconvolution(resp.phi_xw, resp.phi_xe, full);
    FirOperator k_full(resp.phi_ue.rows(), resp.phi_ue.cols(), full);
    for (int t = 1; t <= full; ++t) {
        Eigen::MatrixXd& kt = k_full.tap(t);
        if (t <= resp.phi_ue.horizon()) kt = resp.phi_ue.tap(t);
        for (int i = 1; i <= std::min(t, resp.phi_uw.horizon()); ++i) {
            kt.noalias() -= resp.phi_uw.tap(i) * g[static_cast<std::size_t>(t - i)];
        }
    }

    std::vector<Eigen::MatrixXd> kept(k_full.taps().begin(), k_full.taps().begin() + t_k);
    std::vector<Eigen::MatrixXd> dropped(k_full.taps().begin() + t_k, k_full.taps().end());
    FirController ctrl;
    ctrl.gain = FirOperator(std::move(kept));
    ctrl.truncation_tail = inf_induced_norm(FirOperator(std::move(dropped)));
    return ctrl;
}

MeasurementHistory::MeasurementHistory(Eigen::Index dim, int length) : dim_(dim), length_(length) {
    if (dim < 1 || length < 1) throw std::invalid_argument("measurement history needs positive dimension and length");
    buffer_.assign(2 * static_cast<std::size_t>(dim) * static_cast<std::size_t>(length), 0.0);
    head_ = static_cast<std::size_t>(dim) * static_cast<std::size_t>(length);
}

void MeasurementHistory::push(const Eigen::VectorXd& y) {
    if (y.size() != dim_) throw DimensionError("measurement history: dimension mismatch");
    const std::size_t span = static_cast<std::size_t>(dim_) * static_cast<std::size_t>(length_);
    const std::size_t d = static_cast<std::size_t>(dim_);
    // Move the window start one slot back, wrapping into the mirrored half.
    head_ = (head_ == 0 ? span : head_) - d;
    for (std::size_t i = 0; i < d; ++i) {
        buffer_[head_ + i] = y[static_cast<Eigen::Index>(i)];
        buffer_[(head_ + span + i) % (2 * span)] = y[static_cast<Eigen::Index>(i)];
    }
}

void MeasurementHistory::clear() {
    std::fill(buffer_.begin(), buffer_.end(), 0.0);
    head_ = static_cast<std::size_t>(dim_) * static_cast<std::size_t>(length_);
}

Eigen::VectorXd MeasurementHistory::lag(int t) const {
    if (t < 1 || t > length_) throw std::out_of_range("measurement history lag out of range");
    return Eigen::Map<const Eigen::VectorXd>(window() + static_cast<std::size_t>(t - 1) * dim_, dim_);
}

FirControllerKernel::FirControllerKernel(const FirController& ctrl)
    : gains_(ctrl.gain.stacked()), outputs_(ctrl.gain.cols()), horizon_(ctrl.gain.horizon()) {}

Eigen::VectorXd FirControllerKernel::evaluate(const MeasurementHistory& history) const {
    if (history.dim() != outputs_ || history.length() < horizon_) {
        throw DimensionError("controller_step: history does not cover the controller taps");
    }
    const std::size_t len = static_cast<std::size_t>(gains_.cols());
    Eigen::VectorXd u(gains_.rows());
    for (Eigen::Index i = 0; i < gains_.rows(); ++i) {
        u[i] = kernels::dot({gains_.row(i).data(), len}, {history.window(), len});
    }
    return u;
}

Eigen::VectorXd controller_step(const FirController& ctrl, const MeasurementHistory& history) {
    return FirControllerKernel(ctrl).evaluate(history);
}

}  // namespace sls
