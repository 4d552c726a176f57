#pragma once

#include <Eigen/Dense>
#include <vector>

namespace sls {

// Time series stored column-per-sample: column k is the signal at step k.
using Signal = Eigen::MatrixXd;

// Strictly proper finite impulse response operator
//   (Phi s)[k] = sum_{t=1}^{min(k,T)} Phi(t) s[k-t].
// Taps are addressed 1..T.
class FirOperator {
public:
    FirOperator() = default;
    FirOperator(Eigen::Index rows, Eigen::Index cols, int horizon);
    explicit FirOperator(std::vector<Eigen::MatrixXd> taps);

    Eigen::Index rows() const { return rows_; }
    Eigen::Index cols() const { return cols_; }
    int horizon() const { return static_cast<int>(taps_.size()); }

    const Eigen::MatrixXd& tap(int t) const;
    Eigen::MatrixXd& tap(int t);
    const std::vector<Eigen::MatrixXd>& taps() const { return taps_; }

    // [Phi(1) Phi(2) ... Phi(T)], rows x (T * cols).
    Eigen::MatrixXd stacked() const;

    bool is_zero() const;

private:
    Eigen::Index rows_ = 0;
    Eigen::Index cols_ = 0;
    std::vector<Eigen::MatrixXd> taps_;
};

// The four closed-loop maps from (H w, e) to (x, u).
struct SystemResponses {
    FirOperator phi_xw;  // n x n
    FirOperator phi_xe;  // n x p
    FirOperator phi_uw;  // m x n
    FirOperator phi_ue;  // m x p

    int horizon() const { return phi_xw.horizon(); }
    // Shapes against (n, m, p) and a common horizon.
    void check_shapes(Eigen::Index n, Eigen::Index m, Eigen::Index p) const;
};

// u[k] = sum_{t=1}^{T_K} K(t) y[k-t]
struct FirController {
    FirOperator gain;             // m x p taps
    double truncation_tail = 0.0; // inf-induced norm of the taps dropped past T_K (checked to 2 T_K)
};

// l_inf -> l_inf induced norm: largest absolute row sum across all taps.
double inf_induced_norm(const FirOperator& op);

// Composition a*b truncated to `horizon` taps; tap 1 of the product is zero.
FirOperator convolve(const FirOperator& a, const FirOperator& b, int horizon);
FirOperator convolve(const FirOperator& a, const FirOperator& b);

Signal signal_apply(const FirOperator& op, const Signal& signal);

// Taps G(0..t_out-1) of phi_xw^{-1} phi_xe, obtained by forward substitution.
// phi_xw(1) must be the identity.
std::vector<Eigen::MatrixXd> solve_deconvolution(const FirOperator& phi_xw, const FirOperator& phi_xe,
                                                 int t_out);

// K = phi_ue - phi_uw phi_xw^{-1} phi_xe truncated to t_k taps.
FirController realize_controller(const SystemResponses& resp, int t_k);

// Fixed-length window of past measurements, newest first and zero before
// the start. Backed by a mirrored ring so the window is always contiguous.
class MeasurementHistory {
public:
    MeasurementHistory(Eigen::Index dim, int length);

    void push(const Eigen::VectorXd& y);
    void clear();

    Eigen::Index dim() const { return dim_; }
    int length() const { return length_; }
    // y[k-1], y[k-2], ..., y[k-length] concatenated.
    const double* window() const { return buffer_.data() + head_; }
    Eigen::VectorXd lag(int t) const;  // y[k-t], t in 1..length

private:
    Eigen::Index dim_;
    int length_;
    std::size_t head_ = 0;
    std::vector<double> buffer_;
};

// Precomputed row-major [K(1) ... K(T_K)] for repeated evaluation.
class FirControllerKernel {
public:
    explicit FirControllerKernel(const FirController& ctrl);
    Eigen::VectorXd evaluate(const MeasurementHistory& history) const;
    int horizon() const { return horizon_; }
    Eigen::Index inputs() const { return gains_.rows(); }
    Eigen::Index outputs() const { return outputs_; }

private:
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> gains_;
    Eigen::Index outputs_;
    int horizon_;
};

Eigen::VectorXd controller_step(const FirController& ctrl, const MeasurementHistory& history);

}  // namespace sls
