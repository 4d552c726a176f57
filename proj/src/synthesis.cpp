#include "sls_robust/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "sls_robust/errors.hpp"

namespace sls {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr ResponseBlock kBlocks[] = {ResponseBlock::XW, ResponseBlock::XE, ResponseBlock::UW, ResponseBlock::UE};

const FirOperator& block_of(const SystemResponses& r, ResponseBlock b) {
    switch (b) {
        case ResponseBlock::XW: return r.phi_xw;
        case ResponseBlock::XE: return r.phi_xe;
        case ResponseBlock::UW: return r.phi_uw;
        case ResponseBlock::UE: return r.phi_ue;
    }
    return r.phi_xw;
}

FirOperator& block_of(SystemResponses& r, ResponseBlock b) {
    return const_cast<FirOperator&>(block_of(static_cast<const SystemResponses&>(r), b));
}

double induced_inf(const MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().rowwise().sum().maxCoeff(); }

using Triplets = std::vector<Eigen::Triplet<double>>;

struct ConstraintBuilder {
    const TapLayout& layout;
    Triplets trip;
    std::vector<double> rhs;

    Index new_rows(Index count, const MatrixXd* value) {
        const Index first = static_cast<Index>(rhs.size());
        for (Index k = 0; k < count; ++k) rhs.push_back(0.0);
        if (value) {
            for (Index k = 0; k < count; ++k) rhs[static_cast<std::size_t>(first + k)] = value->reshaped()(k);
        }
        return first;
    }
    void add(Index row, Index col, double v) {
        if (v != 0.0) trip.emplace_back(static_cast<int>(row), static_cast<int>(col), v);
    }
    // rows += coef * L * Phi_b(t), row r of the block equation indexed column-major (i, j).
    void left_product(Index first, Index eq_rows, const MatrixXd& L, ResponseBlock b, int t, double coef) {
        const Index cols = layout.cols(b);
        for (Index j = 0; j < cols; ++j)
            for (Index i = 0; i < eq_rows; ++i)
                for (Index l = 0; l < L.cols(); ++l) add(first + j * eq_rows + i, layout.index(b, t, l, j), coef * L(i, l));
    }
    // rows += coef * Phi_b(t) * R
    void right_product(Index first, Index eq_rows, const MatrixXd& R, ResponseBlock b, int t, double coef) {
        for (Index j = 0; j < R.cols(); ++j)
            for (Index i = 0; i < eq_rows; ++i)
                for (Index l = 0; l < R.rows(); ++l) add(first + j * eq_rows + i, layout.index(b, t, i, l), coef * R(l, j));
    }
};

// Both families of tap recursions. With left_interior = false the rows the
// input-tap parametrization satisfies by construction are left out.
AffineConstraints build_constraints(const DiscreteLtiSystem& sys, int T, bool left_interior) {
    AffineConstraints out;
    out.layout = TapLayout(sys.states(), sys.inputs(), sys.outputs(), T);
    const Index n = sys.states(), m = sys.inputs(), p = sys.outputs();
    ConstraintBuilder cb{out.layout, {}, {}};
    const MatrixXd In = MatrixXd::Identity(n, n);

    struct Family {
        ResponseBlock x, u;
        Index cols;
        bool identity;
    };
    for (const Family& fam : {Family{ResponseBlock::XW, ResponseBlock::UW, n, true},
                              Family{ResponseBlock::XE, ResponseBlock::UE, p, false}}) {
        const Index size = n * fam.cols;
        if (left_interior) {
            MatrixXd target = fam.identity ? In : MatrixXd::Zero(n, fam.cols);
            const Index r = cb.new_rows(size, &target);
            cb.left_product(r, n, In, fam.x, 1, 1.0);
            for (int t = 1; t < T; ++t) {
                const Index q = cb.new_rows(size, nullptr);
                cb.left_product(q, n, In, fam.x, t + 1, 1.0);
                cb.left_product(q, n, sys.A, fam.x, t, -1.0);
                cb.left_product(q, n, sys.B, fam.u, t, -1.0);
            }
        }
        const Index q = cb.new_rows(size, nullptr);
        cb.left_product(q, n, sys.A, fam.x, T, -1.0);
        cb.left_product(q, n, sys.B, fam.u, T, -1.0);
    }

    struct RightFamily {
        ResponseBlock w, e;
        Index rows;
        bool identity;
    };
    for (const RightFamily& fam : {RightFamily{ResponseBlock::XW, ResponseBlock::XE, n, true},
                                   RightFamily{ResponseBlock::UW, ResponseBlock::UE, m, false}}) {
        const Index size = fam.rows * n;
        MatrixXd target = fam.identity ? In : MatrixXd::Zero(fam.rows, n);
        const Index r = cb.new_rows(size, &target);
        cb.right_product(r, fam.rows, In, fam.w, 1, 1.0);
        for (int t = 1; t < T; ++t) {
            const Index q = cb.new_rows(size, nullptr);
            cb.right_product(q, fam.rows, In, fam.w, t + 1, 1.0);
            cb.right_product(q, fam.rows, sys.A, fam.w, t, -1.0);
            cb.right_product(q, fam.rows, sys.C, fam.e, t, -1.0);
        }
        const Index q = cb.new_rows(size, nullptr);
        cb.right_product(q, fam.rows, sys.A, fam.w, T, -1.0);
        cb.right_product(q, fam.rows, sys.C, fam.e, T, -1.0);
    }

    out.E.resize(static_cast<Index>(cb.rhs.size()), out.layout.size());
    out.E.setFromTriplets(cb.trip.begin(), cb.trip.end());
    out.f = Eigen::Map<const VectorXd>(cb.rhs.data(), static_cast<Index>(cb.rhs.size()));
    return out;
}

void check_system(const DiscreteLtiSystem& sys, int T) {
    sys.validate();
    if (T < 2) throw std::invalid_argument("FIR horizon must be at least 2");
}

double h_norm_factor(const DiscreteLtiSystem& sys) { return std::max(1.0, induced_inf(sys.H)); }

double robustness_rhs(const SynthesisProblem& pb) {
    return 1.0 - pb.d_max / pb.error_model.radius_r - pb.margin;
}

double robustness_lhs(const SynthesisProblem& pb, double xe_norm, double xw_norm) {
    const auto& em = pb.error_model;
    return (em.s_hat + em.epsilon_e / em.radius_r) * xe_norm +
           (pb.eps_w / em.radius_r) * h_norm_factor(pb.sys) * xw_norm;
}

// Affine expressions a'xi + b for tap entries, grouped by operator row.
enum class View { Raw, TimesH, Diff };

struct Expressions {
    std::vector<VectorXd> a;
    std::vector<double> b;
    std::vector<Index> group;
    std::vector<double> group_const;  // sum of |b| of the constant members

    Index add_groups(Index count) {
        const Index first = static_cast<Index>(group_const.size());
        group_const.resize(group_const.size() + static_cast<std::size_t>(count), 0.0);
        return first;
    }
};

class LpAssembler {
public:
    LpAssembler(const SynthesisProblem& pb, const AchievableSet& ach) : pb_(pb), ach_(ach) {
        const double scale = std::max(1.0, ach.basis.size() ? ach.basis.cwiseAbs().maxCoeff() : 0.0);
        zero_tol_ = 1e-12 * scale;
        h_is_identity_ = pb.sys.H.rows() == pb.sys.H.cols() &&
                         pb.sys.H.isApprox(MatrixXd::Identity(pb.sys.H.rows(), pb.sys.H.cols()), 0.0);
    }

    // Row groups of |view(block)|; cached so shared operators get one set of epigraph variables.
    Index groups(ResponseBlock b, View view) {
        if (view == View::TimesH && h_is_identity_) view = View::Raw;
        const int key = static_cast<int>(b) * 3 + static_cast<int>(view);
        if (group_of_[key] >= 0) return group_of_[key];
        const TapLayout& L = ach_.layout;
        const Index rows = L.rows(b), cols = L.cols(b);
        const Index first = ex_.add_groups(rows);
        group_of_[key] = first;
        const FirOperator* nominal = view == View::Diff ? &block_of(*pb_.cost.nominal, b) : nullptr;
        const MatrixXd& H = pb_.sys.H;
        const Index out_cols = view == View::TimesH ? H.cols() : cols;
        VectorXd a(ach_.basis.cols());
        for (int t = 1; t <= L.horizon; ++t) {
            for (Index i = 0; i < rows; ++i) {
                for (Index j = 0; j < out_cols; ++j) {
                    double b0 = 0.0;
                    if (view == View::TimesH) {
                        a.setZero();
                        for (Index l = 0; l < cols; ++l) {
                            if (H(l, j) == 0.0) continue;
                            const Index k = L.index(b, t, i, l);
                            a += H(l, j) * ach_.basis.row(k).transpose();
                            b0 += H(l, j) * ach_.offset(k);
                        }
                    } else {
                        const Index k = L.index(b, t, i, j);
                        a = ach_.basis.row(k).transpose();
                        b0 = ach_.offset(k);
                        if (nominal) b0 -= nominal->tap(t)(i, j);
                    }
                    if (a.size() == 0 || a.cwiseAbs().maxCoeff() <= zero_tol_) {
                        ex_.group_const[static_cast<std::size_t>(first + i)] += std::abs(b0);
                    } else {
                        ex_.a.push_back(a);
                        ex_.b.push_back(b0);
                        ex_.group.push_back(first + i);
                    }
                }
            }
        }
        return first;
    }

    // tau >= sum_k w_k rho_{g_k}
    void add_cost_row(std::vector<std::pair<Index, double>> terms) {
        terms.erase(std::remove_if(terms.begin(), terms.end(), [](const auto& t) { return t.second == 0.0; }),
                    terms.end());
        if (!terms.empty()) cost_rows_.push_back(std::move(terms));
    }

    void add_robustness(const RobustnessBound& bound, bool objective_only) {
        robust_ = true;
        robust_objective_ = objective_only;
        bound_ = bound;
        xe_groups_ = groups(ResponseBlock::XE, View::Raw);
        if (bound.coef_xw != 0.0) xw_groups_ = groups(ResponseBlock::XW, View::Raw);
    }

    SynthesisProgram assemble() const {
        const Index nxi = ach_.basis.cols();
        const Index ns = static_cast<Index>(ex_.a.size());
        const Index ng = static_cast<Index>(ex_.group_const.size());
        const Index s0 = nxi, g0 = s0 + ns, tau = g0 + ng;
        const bool use_nu_w = robust_ && xw_groups_ >= 0;
        const Index nu_e = tau + 1, nu_w = tau + 2;
        const Index nvar = tau + 1 + (robust_ ? 1 : 0) + (use_nu_w ? 1 : 0);
        const Index states = pb_.sys.states();

        Triplets gin, geq;
        std::vector<double> hin, heq;
        auto row_in = [&](double rhs) {
            hin.push_back(rhs);
            return static_cast<int>(hin.size() - 1);
        };
        for (Index k = 0; k < ns; ++k) {
            const VectorXd& a = ex_.a[static_cast<std::size_t>(k)];
            const double b = ex_.b[static_cast<std::size_t>(k)];
            const int up = row_in(-b), dn = row_in(b);
            for (Index j = 0; j < nxi; ++j) {
                if (a(j) == 0.0) continue;
                gin.emplace_back(up, static_cast<int>(j), a(j));
                gin.emplace_back(dn, static_cast<int>(j), -a(j));
            }
            gin.emplace_back(up, static_cast<int>(s0 + k), -1.0);
            gin.emplace_back(dn, static_cast<int>(s0 + k), -1.0);
        }
        for (Index g = 0; g < ng; ++g) {
            heq.push_back(ex_.group_const[static_cast<std::size_t>(g)]);
            geq.emplace_back(static_cast<int>(g), static_cast<int>(g0 + g), 1.0);
        }
        for (Index k = 0; k < ns; ++k) {
            geq.emplace_back(static_cast<int>(ex_.group[static_cast<std::size_t>(k)]), static_cast<int>(s0 + k), -1.0);
        }
        if (!robust_objective_) {
            for (const auto& terms : cost_rows_) {
                const int r = row_in(0.0);
                for (const auto& [g, w] : terms) gin.emplace_back(r, static_cast<int>(g0 + g), w);
                gin.emplace_back(r, static_cast<int>(tau), -1.0);
            }
        }
        if (robust_) {
            for (Index i = 0; i < states; ++i) {
                const int r = row_in(0.0);
                gin.emplace_back(r, static_cast<int>(g0 + xe_groups_ + i), 1.0);
                gin.emplace_back(r, static_cast<int>(nu_e), -1.0);
                if (xw_groups_ >= 0) {
                    const int q = row_in(0.0);
                    gin.emplace_back(q, static_cast<int>(g0 + xw_groups_ + i), 1.0);
                    gin.emplace_back(q, static_cast<int>(nu_w), -1.0);
                }
            }
            const int r = row_in(robust_objective_ ? 0.0 : bound_.rhs);
            gin.emplace_back(r, static_cast<int>(nu_e), bound_.coef_xe);
            if (use_nu_w) gin.emplace_back(r, static_cast<int>(nu_w), bound_.coef_xw);
            if (robust_objective_) gin.emplace_back(r, static_cast<int>(tau), -1.0);
        }

        SynthesisProgram out;
        out.num_params = nxi;
        out.epigraph_var = tau;
        auto& prog = out.lp;
        prog.c = VectorXd::Zero(nvar);
        prog.c(tau) = 1.0;
        prog.a_in.resize(static_cast<Index>(hin.size()), nvar);
        prog.a_in.setFromTriplets(gin.begin(), gin.end());
        prog.b_in = Eigen::Map<const VectorXd>(hin.data(), static_cast<Index>(hin.size()));
        prog.a_eq.resize(static_cast<Index>(heq.size()), nvar);
        prog.a_eq.setFromTriplets(geq.begin(), geq.end());
        prog.b_eq = Eigen::Map<const VectorXd>(heq.data(), static_cast<Index>(heq.size()));
        // Every cost is a norm, so tau >= 0 keeps the program bounded even
        // when all weights vanish.
        prog.lower = VectorXd::Constant(nvar, -std::numeric_limits<double>::infinity());
        prog.lower(tau) = 0.0;
        return out;
    }

private:
    const SynthesisProblem& pb_;
    const AchievableSet& ach_;
    double zero_tol_ = 0.0;
    bool h_is_identity_ = false;
    Expressions ex_;
    Index group_of_[12] = {-1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1};
    std::vector<std::vector<std::pair<Index, double>>> cost_rows_;
    bool robust_ = false;
    bool robust_objective_ = false;
    RobustnessBound bound_;
    Index xe_groups_ = -1, xw_groups_ = -1;
};

void add_cost(LpAssembler& as, const SynthesisProblem& pb) {
    const Index n = pb.sys.states(), m = pb.sys.inputs();
    const double ew = pb.eps_w, ee = pb.error_model.epsilon_e;
    if (pb.cost.kind == CostKind::QuadraticL1) {
        const Index xw = ew != 0.0 ? as.groups(ResponseBlock::XW, View::TimesH) : -1;
        const Index xe = ee != 0.0 ? as.groups(ResponseBlock::XE, View::Raw) : -1;
        const Index uw = ew != 0.0 ? as.groups(ResponseBlock::UW, View::TimesH) : -1;
        const Index ue = ee != 0.0 ? as.groups(ResponseBlock::UE, View::Raw) : -1;
        for (Index i = 0; i < n; ++i) {
            const double q = std::sqrt(pb.cost.q_diag(i));
            std::vector<std::pair<Index, double>> row;
            if (xw >= 0) row.emplace_back(xw + i, q * ew);
            if (xe >= 0) row.emplace_back(xe + i, q * ee);
            as.add_cost_row(std::move(row));
        }
        for (Index i = 0; i < m; ++i) {
            const double r = std::sqrt(pb.cost.r_diag(i));
            std::vector<std::pair<Index, double>> row;
            if (uw >= 0) row.emplace_back(uw + i, r * ew);
            if (ue >= 0) row.emplace_back(ue + i, r * ee);
            as.add_cost_row(std::move(row));
        }
    } else {
        const Index xw = as.groups(ResponseBlock::XW, View::Diff);
        const Index xe = as.groups(ResponseBlock::XE, View::Diff);
        const Index uw = as.groups(ResponseBlock::UW, View::Diff);
        const Index ue = as.groups(ResponseBlock::UE, View::Diff);
        for (Index i = 0; i < n; ++i) {
            const double q = std::sqrt(pb.cost.q_diag(i));
            as.add_cost_row({{xw + i, q}, {xe + i, q}});
        }
        for (Index i = 0; i < m; ++i) {
            const double r = std::sqrt(pb.cost.r_diag(i));
            as.add_cost_row({{uw + i, r}, {ue + i, r}});
        }
    }
}

RobustnessBound problem_bound(const SynthesisProblem& pb) {
    const auto& em = pb.error_model;
    return robustness_bound(em.s_hat, em.epsilon_e, em.radius_r, pb.eps_w, pb.d_max, pb.margin,
                            h_norm_factor(pb.sys));
}

SystemResponses responses_from(const AchievableSet& ach, const VectorXd& xi) {
    return ach.layout.unpack(ach.offset + ach.basis * xi);
}

// lower_bound receives the dual objective of the lhs-minimizing LP, or NaN if it did not solve.
InfeasibilityDiagnostic diagnose(const SynthesisProblem& pb, const AchievableSet& ach, const RobustnessBound& bound,
                                 double* lower_bound = nullptr) {
    InfeasibilityDiagnostic d;
    if (lower_bound) *lower_bound = std::numeric_limits<double>::quiet_NaN();
    const auto& em = pb.error_model;
    d.rhs = bound.rhs;
    d.margin = pb.margin;
    d.d_max_term = pb.d_max / em.radius_r;

    LpAssembler as(pb, ach);
    as.add_robustness(bound, true);
    const auto prog = as.assemble();
    const auto sol = lp::solve(prog.lp, pb.solver);
    if (sol.status == lp::Status::Optimal) {
        const auto resp = responses_from(ach, sol.v.head(prog.num_params));
        const double xe = inf_induced_norm(resp.phi_xe), xw = inf_induced_norm(resp.phi_xw);
        d.s_term = em.s_hat * xe;
        d.eps_e_term = em.epsilon_e / em.radius_r * xe;
        d.eps_w_term = bound.coef_xw * xw;
        d.min_lhs = d.s_term + d.eps_e_term + d.eps_w_term;
        if (lower_bound) *lower_bound = sol.dual_objective;
    } else {
        d.min_lhs = std::numeric_limits<double>::quiet_NaN();
    }
    const std::pair<double, const char*> terms[] = {{d.s_term, "S*|Phi_xe|"},
                                                    {d.eps_e_term, "(eps_e/r)*|Phi_xe|"},
                                                    {d.eps_w_term, "(eps_w/r)*|Phi_xw|"}};
    const auto* top = std::max_element(std::begin(terms), std::end(terms),
                                       [](const auto& a, const auto& b) { return a.first < b.first; });
    d.binding = top->second;
    return d;
}

std::string describe(const InfeasibilityDiagnostic& d) {
    std::ostringstream os;
    os << "robust synthesis infeasible: smallest achievable (S + eps_e/r)|Phi_xe| + (eps_w/r)|Phi_xw| = " << d.min_lhs
       << " exceeds 1 - d_max/r - margin = " << d.rhs << " (terms: S*|Phi_xe| = " << d.s_term
       << ", (eps_e/r)*|Phi_xe| = " << d.eps_e_term << ", (eps_w/r)*|Phi_xw| = " << d.eps_w_term
       << ", d_max/r = " << d.d_max_term << "; largest: " << d.binding << ")";
    return os.str();
}

}  // namespace

TapLayout::TapLayout(Index states, Index inputs, Index outputs, int T) : n(states), m(inputs), p(outputs), horizon(T) {}

Index TapLayout::rows(ResponseBlock b) const {
    return (b == ResponseBlock::XW || b == ResponseBlock::XE) ? n : m;
}

Index TapLayout::cols(ResponseBlock b) const {
    return (b == ResponseBlock::XW || b == ResponseBlock::UW) ? n : p;
}

Index TapLayout::offset(ResponseBlock b) const {
    Index off = 0;
    for (ResponseBlock k : kBlocks) {
        if (k == b) return off;
        off += rows(k) * cols(k) * horizon;
    }
    return off;
}

Index TapLayout::index(ResponseBlock b, int t, Index i, Index j) const {
    return offset(b) + static_cast<Index>(t - 1) * rows(b) * cols(b) + j * rows(b) + i;
}

Index TapLayout::size() const { return (n + m) * (n + p) * horizon; }

VectorXd TapLayout::pack(const SystemResponses& resp) const {
    resp.check_shapes(n, m, p);
    if (resp.horizon() != horizon) throw DimensionError("response horizon does not match the layout");
    VectorXd out(size());
    for (ResponseBlock b : kBlocks) {
        const auto& op = block_of(resp, b);
        const Index sz = rows(b) * cols(b);
        for (int t = 1; t <= horizon; ++t) out.segment(index(b, t, 0, 0), sz) = op.tap(t).reshaped();
    }
    return out;
}

SystemResponses TapLayout::unpack(const VectorXd& taps) const {
    if (taps.size() != size()) throw DimensionError("tap vector does not match the layout");
    SystemResponses resp;
    for (ResponseBlock b : kBlocks) {
        FirOperator op(rows(b), cols(b), horizon);
        for (int t = 1; t <= horizon; ++t) {
            op.tap(t) = taps.segment(index(b, t, 0, 0), rows(b) * cols(b)).reshaped(rows(b), cols(b));
        }
        block_of(resp, b) = std::move(op);
    }
    return resp;
}

AffineConstraints achievability_constraints(const DiscreteLtiSystem& sys, int horizon) {
    check_system(sys, horizon);
    return build_constraints(sys, horizon, true);
}

AchievableSet parametrize_achievable(const DiscreteLtiSystem& sys, int T) {
    check_system(sys, T);
    const Index n = sys.states(), m = sys.inputs(), p = sys.outputs();
    AchievableSet out;
    out.layout = TapLayout(n, m, p, T);
    const TapLayout& L = out.layout;
    const Index ntheta = static_cast<Index>(T) * m * (n + p);
    const Index theta0 = L.offset(ResponseBlock::UW);  // input taps are contiguous at the end

    // phi = m0 + M theta: state taps follow from the left recursion.
    MatrixXd M = MatrixXd::Zero(L.size(), ntheta);
    VectorXd m0 = VectorXd::Zero(L.size());
    M.bottomRows(ntheta).setIdentity();
    for (const auto& [xb, ub, cols, identity] :
         {std::tuple{ResponseBlock::XW, ResponseBlock::UW, n, true}, std::tuple{ResponseBlock::XE, ResponseBlock::UE, p, false}}) {
        const Index sz = n * cols;
        if (identity) m0.segment(L.index(xb, 1, 0, 0), sz) = MatrixXd::Identity(n, n).reshaped();
        for (int t = 1; t < T; ++t) {
            const Index cur = L.index(xb, t, 0, 0), nxt = L.index(xb, t + 1, 0, 0);
            // vec(A X) applied to every column of the coefficient block.
            MatrixXd coef = M.middleRows(cur, sz);
            Eigen::Map<MatrixXd> view(coef.data(), n, cols * ntheta);
            MatrixXd next = sys.A * view;
            M.middleRows(nxt, sz) = Eigen::Map<MatrixXd>(next.data(), sz, ntheta);
            VectorXd c0 = m0.segment(cur, sz);
            m0.segment(nxt, sz) = (sys.A * c0.reshaped(n, cols)).reshaped();
            for (Index j = 0; j < cols; ++j)
                for (Index i = 0; i < n; ++i)
                    for (Index l = 0; l < m; ++l) M(nxt + j * n + i, L.index(ub, t, l, j) - theta0) += sys.B(i, l);
        }
    }

    const AffineConstraints rest = build_constraints(sys, T, false);
    const MatrixXd Er = rest.E * M;
    const VectorXd fr = rest.f - rest.E * m0;

    Eigen::ColPivHouseholderQR<MatrixXd> qr;
    qr.setThreshold(1e-10);
    qr.compute(Er.transpose());
    const Index rank = qr.rank();
    const MatrixXd Q = qr.householderQ() * MatrixXd::Identity(ntheta, ntheta);
    const MatrixXd R = qr.matrixR().topLeftCorner(rank, rank).triangularView<Eigen::Upper>();
    const VectorXd pf = qr.colsPermutation().transpose() * fr;
    const VectorXd eta = R.transpose().triangularView<Eigen::Lower>().solve(pf.head(rank));
    const VectorXd theta_p = Q.leftCols(rank) * eta;

    out.offset = m0 + M * theta_p;
    out.basis = M * Q.rightCols(ntheta - rank);

    const AffineConstraints full = build_constraints(sys, T, true);
    out.residual = (full.E * out.offset - full.f).cwiseAbs().maxCoeff();
    const double scale = 1.0 + fr.cwiseAbs().maxCoeff() + Er.cwiseAbs().maxCoeff();
    if (!(out.residual <= 1e-8 * scale)) {
        throw std::runtime_error("no FIR system response of horizon " + std::to_string(T) +
                                 " satisfies the achievability constraints (residual " +
                                 std::to_string(out.residual) + ")");
    }
    return out;
}

double achievability_residual(const DiscreteLtiSystem& sys, const SystemResponses& resp) {
    const auto cons = achievability_constraints(sys, resp.horizon());
    return (cons.E * cons.layout.pack(resp) - cons.f).cwiseAbs().maxCoeff();
}

ZDomainResidual z_domain_residual(const DiscreteLtiSystem& sys, const SystemResponses& resp, std::complex<double> z) {
    using CMat = Eigen::MatrixXcd;
    const Index n = sys.states(), m = sys.inputs(), p = sys.outputs();
    resp.check_shapes(n, m, p);
    auto eval = [&](const FirOperator& op) {
        CMat acc = CMat::Zero(op.rows(), op.cols());
        std::complex<double> zt = 1.0 / z;
        for (int t = 1; t <= op.horizon(); ++t, zt /= z) acc += op.tap(t).cast<std::complex<double>>() * zt;
        return acc;
    };
    CMat phi(n + m, n + p);
    phi << eval(resp.phi_xw), eval(resp.phi_xe), eval(resp.phi_uw), eval(resp.phi_ue);

    const CMat zIA = z * CMat::Identity(n, n) - sys.A.cast<std::complex<double>>();
    CMat left_op(n, n + m);
    left_op << zIA, -sys.B.cast<std::complex<double>>();
    CMat left_target = CMat::Zero(n, n + p);
    left_target.leftCols(n).setIdentity();
    CMat right_op(n + p, n);
    right_op << zIA, -sys.C.cast<std::complex<double>>();
    CMat right_target = CMat::Zero(n + m, n);
    right_target.topRows(n).setIdentity();

    auto norm = [](const CMat& c) { return c.cwiseAbs().rowwise().sum().maxCoeff(); };
    return {norm(left_op * phi - left_target), norm(phi * right_op - right_target)};
}

void SynthesisProblem::validate() const {
    sys.validate();
    error_model.validate();
    if (horizon < 2) throw std::invalid_argument("FIR horizon must be at least 2");
    if (!(eps_w >= 0.0) || !std::isfinite(eps_w)) throw std::invalid_argument("eps_w must be >= 0");
    if (!(d_max >= 0.0) || !std::isfinite(d_max)) throw std::invalid_argument("d_max must be >= 0");
    if (!(margin > 0.0) || !std::isfinite(margin)) throw std::invalid_argument("margin must be > 0");
    if (r0 && (!(*r0 >= 0.0) || !std::isfinite(*r0))) throw std::invalid_argument("R0 must be >= 0");
    if (cost.q_diag.size() != sys.states()) throw DimensionError("Q diagonal must have one weight per state");
    if (cost.r_diag.size() != sys.inputs()) throw DimensionError("R diagonal must have one weight per input");
    if (!cost.q_diag.allFinite() || !cost.r_diag.allFinite() || cost.q_diag.minCoeff() < 0.0 ||
        (cost.r_diag.size() && cost.r_diag.minCoeff() < 0.0)) {
        throw std::invalid_argument("Q and R weights must be finite and non-negative");
    }
    if (cost.kind == CostKind::Imitation) {
        if (!cost.nominal) throw std::invalid_argument("imitation cost needs nominal responses");
        cost.nominal->check_shapes(sys.states(), sys.inputs(), sys.outputs());
        if (cost.nominal->horizon() != horizon) throw DimensionError("nominal responses have a different horizon");
    } else if (cost.nominal) {
        throw std::invalid_argument("nominal responses are only used by the imitation cost");
    }
}

RobustnessBound robustness_bound(double s, double eps_e, double radius, double eps_w, double d_max, double margin,
                                 double h_norm) {
    if (!(radius > 0.0)) throw std::invalid_argument("radius must be positive");
    RobustnessBound b;
    b.coef_xe = s + eps_e / radius;
    b.coef_xw = eps_w / radius * std::max(1.0, h_norm);
    b.rhs = 1.0 - d_max / radius - margin;
    if (!(b.rhs > 0.0)) {
        InfeasibilityDiagnostic d;
        d.rhs = b.rhs;
        d.d_max_term = d_max / radius;
        d.margin = margin;
        d.binding = "d_max/r + margin";
        throw SynthesisInfeasible("robustness constraint is structurally infeasible: 1 - d_max/r - margin = " +
                                      std::to_string(b.rhs) + " <= 0",
                                  d);
    }
    return b;
}

double quadratic_l1_cost(const SynthesisProblem& pb, const SystemResponses& resp) {
    const Index n = pb.sys.states(), m = pb.sys.inputs(), p = pb.sys.outputs(), d = pb.sys.disturbances();
    const MatrixXd q = pb.cost.q_diag.cwiseSqrt().asDiagonal();
    const MatrixXd r = pb.cost.r_diag.cwiseSqrt().asDiagonal();
    std::vector<MatrixXd> taps;
    for (int t = 1; t <= resp.horizon(); ++t) {
        MatrixXd tap(n + m, d + p);
        tap << q * resp.phi_xw.tap(t) * pb.sys.H * pb.eps_w, q * resp.phi_xe.tap(t) * pb.error_model.epsilon_e,
            r * resp.phi_uw.tap(t) * pb.sys.H * pb.eps_w, r * resp.phi_ue.tap(t) * pb.error_model.epsilon_e;
        taps.push_back(std::move(tap));
    }
    return inf_induced_norm(FirOperator(std::move(taps)));
}

double imitation_cost(const SynthesisProblem& pb, const SystemResponses& resp) {
    if (!pb.cost.nominal) throw std::invalid_argument("imitation cost needs nominal responses");
    const auto& nom = *pb.cost.nominal;
    if (nom.horizon() != resp.horizon()) throw DimensionError("nominal responses have a different horizon");
    const Index n = pb.sys.states(), m = pb.sys.inputs(), p = pb.sys.outputs();
    const MatrixXd q = pb.cost.q_diag.cwiseSqrt().asDiagonal();
    const MatrixXd r = pb.cost.r_diag.cwiseSqrt().asDiagonal();
    std::vector<MatrixXd> taps;
    for (int t = 1; t <= resp.horizon(); ++t) {
        MatrixXd tap(n + m, n + p);
        tap << q * (resp.phi_xw.tap(t) - nom.phi_xw.tap(t)), q * (resp.phi_xe.tap(t) - nom.phi_xe.tap(t)),
            r * (resp.phi_uw.tap(t) - nom.phi_uw.tap(t)), r * (resp.phi_ue.tap(t) - nom.phi_ue.tap(t));
        taps.push_back(std::move(tap));
    }
    return inf_induced_norm(FirOperator(std::move(taps)));
}

SynthesisProgram compile(const SynthesisProblem& pb, const AchievableSet& ach) {
    pb.validate();
    if (ach.layout.horizon != pb.horizon || ach.layout.n != pb.sys.states() || ach.layout.m != pb.sys.inputs() ||
        ach.layout.p != pb.sys.outputs()) {
        throw DimensionError("achievable set was built for a different system or horizon");
    }
    LpAssembler as(pb, ach);
    add_cost(as, pb);
    if (pb.robustness_enabled) as.add_robustness(problem_bound(pb), false);
    return as.assemble();
}

double guarantee_gamma(double phi_xe_norm, double s, double r0) {
    const double loop = s * phi_xe_norm;
    if (!(loop < 1.0)) throw std::domain_error("guarantee undefined: S * |Phi_xe| >= 1");
    return r0 / (1.0 - loop);
}

GuaranteeReport evaluate_guarantee(const SynthesisProblem& pb, const SystemResponses& resp) {
    GuaranteeReport rep;
    rep.phi_xe_norm = inf_induced_norm(resp.phi_xe);
    rep.phi_xw_norm = inf_induced_norm(resp.phi_xw);
    rep.s_used = pb.error_model.s_hat;
    rep.r0 = pb.r0.value_or(pb.error_model.epsilon_e);
    rep.robustness_enabled = pb.robustness_enabled;
    rep.robustness_lhs = robustness_lhs(pb, rep.phi_xe_norm, rep.phi_xw_norm);
    rep.robustness_rhs = robustness_rhs(pb);
    rep.feasibility_margin = rep.robustness_rhs - rep.robustness_lhs;
    if (rep.s_used * rep.phi_xe_norm < 1.0) {
        rep.gamma = guarantee_gamma(rep.phi_xe_norm, rep.s_used, rep.r0);
    } else {
        rep.guarantee_void = true;
    }
    return rep;
}

SynthesisResult synthesize(const SynthesisProblem& pb) {
    pb.validate();
    return synthesize(pb, parametrize_achievable(pb.sys, pb.horizon));
}

SynthesisResult synthesize(const SynthesisProblem& pb, const AchievableSet& ach) {
    const SynthesisProgram prog = compile(pb, ach);
    const lp::LpSolution sol = lp::solve(prog.lp, pb.solver);
    if (sol.status == lp::Status::Infeasible) {
        const auto d = diagnose(pb, ach, problem_bound(pb));
        throw SynthesisInfeasible(describe(d), d);
    }
    if (sol.status != lp::Status::Optimal && pb.robustness_enabled) {
        // Near the feasibility threshold the full LP can stall; the lhs-minimizing LP stays well posed.
        double lower = 0.0;
        const auto bound = problem_bound(pb);
        const auto d = diagnose(pb, ach, bound, &lower);
        if (lower > bound.rhs) throw SynthesisInfeasible(describe(d), d);
    }
    if (sol.status != lp::Status::Optimal) {
        throw SolverFailure("synthesis LP failed: " + std::string(lp::to_string(sol.status)), sol.status);
    }
    SynthesisResult res;
    res.responses = responses_from(ach, sol.v.head(prog.num_params));
    res.report = evaluate_guarantee(pb, res.responses);
    res.cost = pb.cost.kind == CostKind::QuadraticL1 ? quadratic_l1_cost(pb, res.responses)
                                                     : imitation_cost(pb, res.responses);
    res.status = sol.status;
    res.iterations = sol.iterations;
    res.kkt = sol.kkt;
    return res;
}

SystemResponses nominal_l1_responses(const SynthesisProblem& pb, const AchievableSet& ach) {
    SynthesisProblem nominal = pb;
    nominal.cost.kind = CostKind::QuadraticL1;
    nominal.cost.nominal.reset();
    nominal.robustness_enabled = false;
    return synthesize(nominal, ach).responses;
}

}  // namespace sls
