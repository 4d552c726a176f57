#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <optional>
#include <ostream>
#include <string_view>

namespace sls::lp {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// minimize c'v  subject to  a_eq v = b_eq,  a_in v <= b_in,  lower <= v <= upper.
// Empty bound vectors mean unbounded; individual bounds may be +-infinity.
struct LinearProgram {
    Eigen::VectorXd c;
    SparseRowMatrix a_eq;
    Eigen::VectorXd b_eq;
    SparseRowMatrix a_in;
    Eigen::VectorXd b_in;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    Eigen::Index num_vars() const { return c.size(); }
    // Throws std::invalid_argument on NaN, infinite data or inconsistent shapes.
    void validate() const;
};

enum class Status { Optimal, Infeasible, Unbounded, MaxIterations, NumericalFailure };

std::string_view to_string(Status status);

struct KktResiduals {
    double primal = 0.0;          // max(|a_eq v - b_eq|, positive part of a_in v - b_in and bound violations)
    double dual = 0.0;            // |c + a_eq' y + a_in' z - z_lower + z_upper|_inf plus negative multipliers
    double complementarity = 0.0; // max_i |z_i * slack_i|
    double gap = 0.0;             // primal objective - dual objective
};

// Lagrange multipliers, sign convention L = c'v + y'(a_eq v - b_eq) + z'(a_in v - b_in)
// + z_upper'(v - upper) + z_lower'(lower - v) with every z >= 0.
struct Multipliers {
    Eigen::VectorXd y_eq;
    Eigen::VectorXd z_in;
    Eigen::VectorXd z_lower;
    Eigen::VectorXd z_upper;
};

struct LpSolution {
    Status status = Status::NumericalFailure;
    Eigen::VectorXd v;
    Multipliers duals;
    double objective = 0.0;
    double dual_objective = 0.0;
    KktResiduals kkt;
    int iterations = 0;
    // Infeasible: multipliers with a_eq'y + a_in'z - z_lower + z_upper ~ 0 and
    // b_eq'y + b_in'z - lower'z_lower + upper'z_upper = -1.
    std::optional<Multipliers> farkas;
};

struct SolverOptions {
    double tol = 1e-8;
    int max_iters = 200;
    std::ostream* trace = nullptr;  // one line per iteration when set
};

LpSolution solve(const LinearProgram& lp, const SolverOptions& options = {});

// Recomputes the residuals from the problem data alone.
KktResiduals verify_kkt(const LinearProgram& lp, const Eigen::VectorXd& v, const Multipliers& duals);
KktResiduals verify_kkt(const LinearProgram& lp, const LpSolution& sol);

}  // namespace sls::lp
