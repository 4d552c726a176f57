#pragma once

#include <Eigen/Dense>
#include <complex>
#include <optional>
#include <stdexcept>
#include <string>

#include "sls_robust/error_model.hpp"
#include "sls_robust/fir.hpp"
#include "sls_robust/lp_solver.hpp"
#include "sls_robust/lti_model.hpp"

namespace sls {

enum class ResponseBlock { XW = 0, XE = 1, UW = 2, UE = 3 };

// Position of every tap entry of the four response blocks in one flat
// vector: blocks in XW, XE, UW, UE order, taps 1..T, entries column-major.
struct TapLayout {
    Eigen::Index n = 0, m = 0, p = 0;
    int horizon = 0;

    TapLayout() = default;
    TapLayout(Eigen::Index states, Eigen::Index inputs, Eigen::Index outputs, int T);

    Eigen::Index rows(ResponseBlock b) const;
    Eigen::Index cols(ResponseBlock b) const;
    Eigen::Index offset(ResponseBlock b) const;
    Eigen::Index index(ResponseBlock b, int t, Eigen::Index i, Eigen::Index j) const;
    Eigen::Index size() const;

    Eigen::VectorXd pack(const SystemResponses& resp) const;
    SystemResponses unpack(const Eigen::VectorXd& taps) const;
};

// Affine tap constraints E phi = f from both achievability families.
struct AffineConstraints {
    TapLayout layout;
    lp::SparseRowMatrix E;
    Eigen::VectorXd f;
};

AffineConstraints achievability_constraints(const DiscreteLtiSystem& sys, int horizon);

// Every achievable response as phi = offset + basis * xi, basis orthonormal in
// the free parameters of the input taps.
struct AchievableSet {
    TapLayout layout;
    Eigen::VectorXd offset;
    Eigen::MatrixXd basis;
    double residual = 0.0;  // |E offset - f|_inf
};

// Throws std::runtime_error when no FIR response of this horizon exists.
AchievableSet parametrize_achievable(const DiscreteLtiSystem& sys, int horizon);

// Largest violation of the tap recursions.
double achievability_residual(const DiscreteLtiSystem& sys, const SystemResponses& resp);

struct ZDomainResidual {
    double left = 0.0;   // |[zI - A, -B] Phi(z) - [I, 0]|
    double right = 0.0;  // |Phi(z) [zI - A; -C] - [I; 0]|
};
ZDomainResidual z_domain_residual(const DiscreteLtiSystem& sys, const SystemResponses& resp, std::complex<double> z);

enum class CostKind { QuadraticL1, Imitation };

struct CostSpec {
    CostKind kind = CostKind::QuadraticL1;
    Eigen::VectorXd q_diag;  // state weights (diagonal of Q)
    Eigen::VectorXd r_diag;  // input weights (diagonal of R)
    std::optional<SystemResponses> nominal;
};

struct SynthesisProblem {
    DiscreteLtiSystem sys;
    int horizon = 20;
    double eps_w = 0.05;
    ErrorModel error_model;  // supplies S (s_hat), eps_e and r
    double d_max = 0.0;
    bool robustness_enabled = true;
    double margin = 1e-3;
    std::optional<double> r0;  // defaults to error_model.epsilon_e
    CostSpec cost;
    lp::SolverOptions solver;

    void validate() const;
};

// (S + eps_e / r) |Phi_xe| + (eps_w / r) h |Phi_xw| <= 1 - d_max / r - margin,
// h = max(1, |H|) so the disturbance term stays an upper bound.
struct RobustnessBound {
    double coef_xe = 0.0;
    double coef_xw = 0.0;
    double rhs = 0.0;
};

// Throws SynthesisInfeasible when the right-hand side is not positive.
RobustnessBound robustness_bound(double s, double eps_e, double radius, double eps_w, double d_max, double margin,
                                 double h_norm = 1.0);

struct GuaranteeReport {
    double phi_xe_norm = 0.0;
    double phi_xw_norm = 0.0;
    double s_used = 0.0;
    double r0 = 0.0;
    std::optional<double> gamma;  // empty when S |Phi_xe| >= 1
    bool guarantee_void = false;
    bool robustness_enabled = false;
    double robustness_lhs = 0.0;
    double robustness_rhs = 0.0;
    double feasibility_margin = 0.0;  // rhs - lhs
};

struct SynthesisResult {
    SystemResponses responses;
    GuaranteeReport report;
    double cost = 0.0;  // recomputed from the taps
    lp::Status status = lp::Status::Optimal;
    int iterations = 0;
    lp::KktResiduals kkt;
};

// Which pieces of the robustness inequality are largest at the least
// violating achievable response.
struct InfeasibilityDiagnostic {
    double rhs = 0.0;
    double min_lhs = 0.0;
    double s_term = 0.0;      // S |Phi_xe|
    double eps_e_term = 0.0;  // eps_e / r |Phi_xe|
    double eps_w_term = 0.0;  // eps_w / r |Phi_xw|
    double d_max_term = 0.0;  // d_max / r
    double margin = 0.0;
    std::string binding;
};

struct SynthesisInfeasible : std::runtime_error {
    SynthesisInfeasible(const std::string& what, InfeasibilityDiagnostic diag)
        : std::runtime_error(what), diagnostic(std::move(diag)) {}
    InfeasibilityDiagnostic diagnostic;
};

struct SolverFailure : std::runtime_error {
    SolverFailure(const std::string& what, lp::Status s) : std::runtime_error(what), status(s) {}
    lp::Status status;
};

// Objective values evaluated directly on response taps.
double quadratic_l1_cost(const SynthesisProblem& problem, const SystemResponses& resp);
double imitation_cost(const SynthesisProblem& problem, const SystemResponses& resp);

// Linear program for a problem over the parametrized achievable set. The
// decision vector starts with the free parameters xi.
struct SynthesisProgram {
    lp::LinearProgram lp;
    Eigen::Index num_params = 0;
    Eigen::Index epigraph_var = 0;  // cost epigraph variable
};
SynthesisProgram compile(const SynthesisProblem& problem, const AchievableSet& achievable);

SynthesisResult synthesize(const SynthesisProblem& problem);
SynthesisResult synthesize(const SynthesisProblem& problem, const AchievableSet& achievable);

// Unconstrained L1 optimum used as the imitation target.
SystemResponses nominal_l1_responses(const SynthesisProblem& problem, const AchievableSet& achievable);

// R0 / (1 - S |Phi_xe|); throws std::domain_error when S |Phi_xe| >= 1.
double guarantee_gamma(double phi_xe_norm, double s, double r0);

GuaranteeReport evaluate_guarantee(const SynthesisProblem& problem, const SystemResponses& resp);

}  // namespace sls
