#include "sls_robust/lp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "sls_robust/kernels.hpp"

namespace sls::lp {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

bool has_rows(const SparseRowMatrix& m) { return m.rows() > 0; }

// Internal form: minimize c'x s.t. A x = b, G x <= h. G stacks a_in, then
// -e_j for finite lower bounds, then e_j for finite upper bounds.
struct Problem {
    Index n = 0;
    VectorXd c, b, h;
    SparseRowMatrix A, G;
    Index n_in = 0;
    std::vector<Index> lower_idx, upper_idx;
};

Problem build(const LinearProgram& lp) {
    Problem p;
    p.n = lp.num_vars();
    p.c = lp.c;
    p.A = has_rows(lp.a_eq) ? SparseRowMatrix(lp.a_eq.pruned(0.0)) : SparseRowMatrix(0, p.n);
    p.b = has_rows(lp.a_eq) ? lp.b_eq : VectorXd();
    p.n_in = lp.a_in.rows();

    for (Index j = 0; j < lp.lower.size(); ++j) {
        if (std::isfinite(lp.lower[j])) p.lower_idx.push_back(j);
    }
    for (Index j = 0; j < lp.upper.size(); ++j) {
        if (std::isfinite(lp.upper[j])) p.upper_idx.push_back(j);
    }
    const Index m = p.n_in + static_cast<Index>(p.lower_idx.size() + p.upper_idx.size());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(lp.a_in.nonZeros()) + p.lower_idx.size() + p.upper_idx.size());
    p.h.resize(m);
    for (Index r = 0; r < p.n_in; ++r) {
        for (SparseRowMatrix::InnerIterator it(lp.a_in, r); it; ++it) {
            if (it.value() != 0.0) trip.emplace_back(r, it.col(), it.value());
        }
        p.h[r] = lp.b_in[r];
    }
    Index row = p.n_in;
    for (Index j : p.lower_idx) {
        trip.emplace_back(row, j, -1.0);
        p.h[row++] = -lp.lower[j];
    }
    for (Index j : p.upper_idx) {
        trip.emplace_back(row, j, 1.0);
        p.h[row++] = lp.upper[j];
    }
    p.G.resize(m, p.n);
    p.G.setFromTriplets(trip.begin(), trip.end());
    p.G.makeCompressed();
    return p;
}

// Solves the KKT system
//   [ 0  A'  G' ] [dx]   [bx]
//   [ A  0   0  ] [dy] = [by]
//   [ G  0  -W  ] [dz]   [bz]
// with W = diag(1/d). The Hessian K = G' diag(d) G is factored through a
// partition of the variables: a variable is "separable" when no G row holds
// another separable variable, which makes its block of K diagonal. Only
// the Schur complement on the remaining dense variables is factored.
class KktSolver {
public:
    explicit KktSolver(const Problem& p) : p_(p) {
        const Index n = p.n;
        const Index m = p.G.rows();
        std::vector<Index> col_nnz(static_cast<std::size_t>(n), 0);
        std::vector<std::vector<Index>> col_rows(static_cast<std::size_t>(n));
        for (Index r = 0; r < m; ++r) {
            for (SparseRowMatrix::InnerIterator it(p.G, r); it; ++it) {
                ++col_nnz[static_cast<std::size_t>(it.col())];
                col_rows[static_cast<std::size_t>(it.col())].push_back(r);
            }
        }
        std::vector<Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
            return col_nnz[static_cast<std::size_t>(a)] < col_nnz[static_cast<std::size_t>(b)];
        });
        std::vector<char> row_taken(static_cast<std::size_t>(m), 0);
        is_sep_.assign(static_cast<std::size_t>(n), 0);
        for (Index j : order) {
            const auto& rows = col_rows[static_cast<std::size_t>(j)];
            if (rows.empty()) continue;
            const bool clash = std::any_of(rows.begin(), rows.end(),
                                           [&](Index r) { return row_taken[static_cast<std::size_t>(r)] != 0; });
            if (clash) continue;
            is_sep_[static_cast<std::size_t>(j)] = 1;
            for (Index r : rows) row_taken[static_cast<std::size_t>(r)] = 1;
        }

        local_.assign(static_cast<std::size_t>(n), 0);
        for (Index j = 0; j < n; ++j) {
            if (is_sep_[static_cast<std::size_t>(j)]) {
                local_[static_cast<std::size_t>(j)] = static_cast<Index>(sep_.size());
                sep_.push_back(j);
            } else {
                local_[static_cast<std::size_t>(j)] = static_cast<Index>(dense_.size());
                dense_.push_back(j);
            }
        }
        const Index nd = static_cast<Index>(dense_.size());
        gd_ = MatrixXd::Zero(m, nd);
        row_sep_.assign(static_cast<std::size_t>(m), -1);
        row_coef_.assign(static_cast<std::size_t>(m), 0.0);
        for (Index r = 0; r < m; ++r) {
            for (SparseRowMatrix::InnerIterator it(p.G, r); it; ++it) {
                const auto j = static_cast<std::size_t>(it.col());
                if (is_sep_[j]) {
                    row_sep_[static_cast<std::size_t>(r)] = local_[j];
                    row_coef_[static_cast<std::size_t>(r)] = it.value();
                    sep_rows_.push_back(r);
                } else {
                    gd_(r, local_[j]) += it.value();
                }
            }
        }
    }

    Index dense_size() const { return static_cast<Index>(dense_.size()); }

    bool factor(const VectorXd& d) {
        d_ = d;
        const auto& kt = kernels::active();
        const Index m = p_.G.rows();
        const Index nd = dense_size();
        const Index ns = static_cast<Index>(sep_.size());

        ks_ = VectorXd::Zero(ns);
        vt_ = MatrixXd::Zero(ns, nd);
        for (Index r : sep_rows_) {
            const Index j = row_sep_[static_cast<std::size_t>(r)];
            const double sigma = row_coef_[static_cast<std::size_t>(r)];
            ks_[j] += d[r] * sigma * sigma;
        }
        for (Index i = 0; i < nd; ++i) {
            for (Index r : sep_rows_) {
                const double g = gd_(r, i);
                if (g != 0.0) {
                    vt_(row_sep_[static_cast<std::size_t>(r)], i) +=
                        d[r] * row_coef_[static_cast<std::size_t>(r)] * g;
                }
            }
        }

        MatrixXd schur = MatrixXd::Zero(nd, nd);
        if (nd > 0) {
            kt.weighted_gram(gd_.data(), static_cast<std::size_t>(m), static_cast<std::size_t>(m),
                             static_cast<std::size_t>(nd), d.data(), schur.data());
            if (ns > 0) {
                const VectorXd neg_inv = -ks_.cwiseInverse();
                kt.weighted_gram(vt_.data(), static_cast<std::size_t>(ns), static_cast<std::size_t>(ns),
                                 static_cast<std::size_t>(nd), neg_inv.data(), schur.data());
            }
        }

        const double scale = std::max(1.0, nd > 0 ? schur.diagonal().cwiseAbs().maxCoeff() : 1.0);
        double reg = 1e-14 * scale;
        bool ok = false;
        for (int attempt = 0; attempt < 8 && !ok; ++attempt, reg *= 100.0) {
            MatrixXd shifted = schur;
            shifted.diagonal().array() += reg;
            llt_.compute(shifted);
            ok = llt_.info() == Eigen::Success;
        }
        if (!ok) return false;

        if (p_.A.rows() > 0) {
            const Index me = p_.A.rows();
            const MatrixXd at = MatrixXd(p_.A.transpose());
            kinv_at_.resize(p_.n, me);
            for (Index k = 0; k < me; ++k) kinv_at_.col(k) = apply_kinv(at.col(k));
            MatrixXd sa = p_.A * kinv_at_;
            sa = 0.5 * (sa + sa.transpose()).eval();
            const double sa_scale = std::max(1.0, sa.diagonal().cwiseAbs().maxCoeff());
            sa.diagonal().array() += 1e-13 * sa_scale;
            ldlt_.compute(sa);
            if (ldlt_.info() != Eigen::Success) return false;
        }
        return true;
    }

    // Solution with iterative refinement on the full system, stopped once the
    // residual no longer shrinks.
    void solve(const VectorXd& bx, const VectorXd& by, const VectorXd& bz, VectorXd& x, VectorXd& y,
               VectorXd& z) const {
        solve_reduced(bx, by, bz, x, y, z);
        const double scale = std::max({1.0, inf_norm(bx), inf_norm(by), inf_norm(bz)});
        double prev = std::numeric_limits<double>::infinity();
        for (int round = 0; round < 6; ++round) {
            VectorXd rx = bx - p_.G.transpose() * z;
            if (p_.A.rows() > 0) rx -= p_.A.transpose() * y;
            VectorXd ry = p_.A.rows() > 0 ? VectorXd(by - p_.A * x) : VectorXd();
            VectorXd rz = bz - p_.G * x + z.cwiseQuotient(d_);
            const double res = std::max({inf_norm(rx), inf_norm(ry), inf_norm(rz)});
            if (res <= 1e-10 * scale || res >= prev) break;
            prev = res;
            VectorXd cx, cy, cz;
            solve_reduced(rx, ry, rz, cx, cy, cz);
            x += cx;
            if (p_.A.rows() > 0) y += cy;
            z += cz;
        }
    }

private:
    VectorXd apply_kinv(const VectorXd& r) const {
        const Index nd = dense_size();
        const Index ns = static_cast<Index>(sep_.size());
        VectorXd rd(nd), rs(ns);
        for (Index i = 0; i < nd; ++i) rd[i] = r[dense_[static_cast<std::size_t>(i)]];
        for (Index j = 0; j < ns; ++j) rs[j] = r[sep_[static_cast<std::size_t>(j)]];
        VectorXd xd;
        if (nd > 0) {
            if (ns > 0) rd.noalias() -= vt_.transpose() * rs.cwiseQuotient(ks_);
            xd = llt_.solve(rd);
        } else {
            xd = VectorXd();
        }
        VectorXd xs = rs;
        if (nd > 0 && ns > 0) xs.noalias() -= vt_ * xd;
        xs = xs.cwiseQuotient(ks_);
        VectorXd out(p_.n);
        for (Index i = 0; i < nd; ++i) out[dense_[static_cast<std::size_t>(i)]] = xd[i];
        for (Index j = 0; j < ns; ++j) out[sep_[static_cast<std::size_t>(j)]] = xs[j];
        return out;
    }

    void solve_reduced(const VectorXd& bx, const VectorXd& by, const VectorXd& bz, VectorXd& x, VectorXd& y,
                       VectorXd& z) const {
        const VectorXd rhs = bx + p_.G.transpose() * d_.cwiseProduct(bz);
        const VectorXd t = apply_kinv(rhs);
        if (p_.A.rows() > 0) {
            y = ldlt_.solve(p_.A * t - by);
            x = t - kinv_at_ * y;
        } else {
            y = VectorXd();
            x = t;
        }
        z = d_.cwiseProduct(p_.G * x - bz);
    }

    const Problem& p_;
    std::vector<char> is_sep_;
    std::vector<Index> local_, dense_, sep_;
    MatrixXd gd_;
    std::vector<Index> row_sep_;
    std::vector<double> row_coef_;
    std::vector<Index> sep_rows_;

    VectorXd d_;
    VectorXd ks_;
    MatrixXd vt_;
    Eigen::LLT<MatrixXd> llt_;
    Eigen::LDLT<MatrixXd> ldlt_;
    MatrixXd kinv_at_;
};

double max_step(const VectorXd& v, const VectorXd& dv) {
    double alpha = kInf;
    for (Index i = 0; i < v.size(); ++i) {
        if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
    }
    return alpha;
}

Multipliers split_duals(const Problem& p, const VectorXd& y, const VectorXd& z) {
    Multipliers out;
    out.y_eq = y;
    out.z_in = z.head(p.n_in);
    out.z_lower = VectorXd::Zero(p.n);
    out.z_upper = VectorXd::Zero(p.n);
    Index row = p.n_in;
    for (Index j : p.lower_idx) out.z_lower[j] = z[row++];
    for (Index j : p.upper_idx) out.z_upper[j] = z[row++];
    return out;
}

void check_finite(const VectorXd& v, const char* what) {
    if (!v.allFinite()) throw std::invalid_argument(std::string("linear program: ") + what + " has NaN or Inf");
}

void check_finite(const SparseRowMatrix& m, const char* what) {
    for (Index r = 0; r < m.outerSize(); ++r) {
        for (SparseRowMatrix::InnerIterator it(m, r); it; ++it) {
            if (!std::isfinite(it.value())) {
                throw std::invalid_argument(std::string("linear program: ") + what + " has NaN or Inf");
            }
        }
    }
}

}  // namespace

std::string_view to_string(Status status) {
    switch (status) {
        case Status::Optimal: return "optimal";
        case Status::Infeasible: return "infeasible";
        case Status::Unbounded: return "unbounded";
        case Status::MaxIterations: return "max-iterations";
        case Status::NumericalFailure: return "numerical-failure";
    }
    return "unknown";
}

void LinearProgram::validate() const {
    const Index n = num_vars();
    check_finite(c, "c");
    if (has_rows(a_eq)) {
        if (a_eq.cols() != n || b_eq.size() != a_eq.rows()) throw std::invalid_argument("linear program: a_eq/b_eq shape");
        check_finite(a_eq, "a_eq");
        check_finite(b_eq, "b_eq");
    } else if (b_eq.size() != 0) {
        throw std::invalid_argument("linear program: b_eq without a_eq");
    }
    if (has_rows(a_in)) {
        if (a_in.cols() != n || b_in.size() != a_in.rows()) throw std::invalid_argument("linear program: a_in/b_in shape");
        check_finite(a_in, "a_in");
        check_finite(b_in, "b_in");
    } else if (b_in.size() != 0) {
        throw std::invalid_argument("linear program: b_in without a_in");
    }
    if (lower.size() != 0 && lower.size() != n) throw std::invalid_argument("linear program: lower bound size");
    if (upper.size() != 0 && upper.size() != n) throw std::invalid_argument("linear program: upper bound size");
    for (Index j = 0; j < lower.size(); ++j) {
        if (std::isnan(lower[j]) || lower[j] == kInf) throw std::invalid_argument("linear program: invalid lower bound");
    }
    for (Index j = 0; j < upper.size(); ++j) {
        if (std::isnan(upper[j]) || upper[j] == -kInf) throw std::invalid_argument("linear program: invalid upper bound");
    }
}

KktResiduals verify_kkt(const LinearProgram& lp, const VectorXd& v, const Multipliers& duals) {
    const Index n = lp.num_vars();
    KktResiduals res;
    VectorXd stationarity = lp.c;
    double dual_obj = 0.0;
    double neg = 0.0;

    if (has_rows(lp.a_eq)) {
        res.primal = std::max(res.primal, inf_norm(lp.a_eq * v - lp.b_eq));
        stationarity += lp.a_eq.transpose() * duals.y_eq;
        dual_obj -= lp.b_eq.dot(duals.y_eq);
    }
    if (has_rows(lp.a_in)) {
        const VectorXd slack = lp.b_in - lp.a_in * v;
        res.primal = std::max(res.primal, std::max(0.0, -slack.minCoeff()));
        stationarity += lp.a_in.transpose() * duals.z_in;
        dual_obj -= lp.b_in.dot(duals.z_in);
        res.complementarity = std::max(res.complementarity, duals.z_in.cwiseProduct(slack).cwiseAbs().maxCoeff());
        neg = std::max(neg, -duals.z_in.minCoeff());
    }
    for (Index j = 0; j < n; ++j) {
        const double zl = duals.z_lower.size() ? duals.z_lower[j] : 0.0;
        const double zu = duals.z_upper.size() ? duals.z_upper[j] : 0.0;
        const bool has_lo = lp.lower.size() && std::isfinite(lp.lower[j]);
        const bool has_up = lp.upper.size() && std::isfinite(lp.upper[j]);
        if (has_lo) {
            const double slack = v[j] - lp.lower[j];
            res.primal = std::max(res.primal, -slack);
            res.complementarity = std::max(res.complementarity, std::fabs(zl * slack));
            dual_obj += lp.lower[j] * zl;
        } else {
            neg = std::max(neg, std::fabs(zl));
        }
        if (has_up) {
            const double slack = lp.upper[j] - v[j];
            res.primal = std::max(res.primal, -slack);
            res.complementarity = std::max(res.complementarity, std::fabs(zu * slack));
            dual_obj -= lp.upper[j] * zu;
        } else {
            neg = std::max(neg, std::fabs(zu));
        }
        stationarity[j] += zu - zl;
        neg = std::max(neg, std::max(-zl, -zu));
    }
    res.dual = std::max(inf_norm(stationarity), neg);
    res.gap = lp.c.dot(v) - dual_obj;
    return res;
}

KktResiduals verify_kkt(const LinearProgram& lp, const LpSolution& sol) {
    return verify_kkt(lp, sol.v, sol.duals);
}

LpSolution solve(const LinearProgram& lp, const SolverOptions& options) {
    lp.validate();
    const Problem p = build(lp);
    const Index n = p.n;
    const Index me = p.A.rows();
    const Index m = p.G.rows();
    const double tol = options.tol;

    LpSolution out;
    KktSolver kkt(p);

    auto finish_optimal = [&](const VectorXd& x, const VectorXd& y, const VectorXd& z, double tau, int iters) {
        out.status = Status::Optimal;
        out.v = x / tau;
        out.duals = split_duals(p, y / tau, z / tau);
        out.objective = lp.c.dot(out.v);
        out.kkt = verify_kkt(lp, out.v, out.duals);
        out.dual_objective = out.objective - out.kkt.gap;
        out.iterations = iters;
        return out;
    };

    // Starting point from two least-squares style solves with W = I.
    VectorXd d = VectorXd::Ones(m);
    if (!kkt.factor(d)) {
        out.status = Status::NumericalFailure;
        return out;
    }
    VectorXd x, y, z, s, tmp_x, tmp_y;
    kkt.solve(VectorXd::Zero(n), p.b, p.h, x, tmp_y, s);
    s = -s;
    kkt.solve(-p.c, VectorXd::Zero(me), VectorXd::Zero(m), tmp_x, y, z);
    if (me == 0) y = VectorXd();
    if (m > 0) {
        const double ts = -s.minCoeff();
        if (ts >= -1e-8 * std::max(1.0, inf_norm(s))) s.array() += 1.0 + ts;
        const double tz = -z.minCoeff();
        if (tz >= -1e-8 * std::max(1.0, inf_norm(z))) z.array() += 1.0 + tz;
    }
    double tau = 1.0;
    double kappa = 1.0;

    const double c_scale = std::max(1.0, inf_norm(p.c));
    const double bh_scale = std::max({1.0, inf_norm(p.b), inf_norm(p.h)});

    for (int iter = 0; iter <= options.max_iters; ++iter) {
        VectorXd rx = p.G.transpose() * z + p.c * tau;
        if (me > 0) rx += p.A.transpose() * y;
        VectorXd ry = me > 0 ? VectorXd(p.A * x - p.b * tau) : VectorXd();
        const VectorXd gx = p.G * x;
        const VectorXd rz = s + gx - p.h * tau;
        const double cx = p.c.dot(x);
        const double by = me > 0 ? p.b.dot(y) : 0.0;
        const double hz = p.h.dot(z);
        const double rt = kappa + cx + by + hz;

        // Optimality of the scaled iterate, measured exactly as verify_kkt does.
        {
            const VectorXd xv = x / tau;
            const Multipliers duals = split_duals(p, y / tau, z / tau);
            const KktResiduals r = verify_kkt(lp, xv, duals);
            if (r.primal <= tol && r.dual <= tol && r.complementarity <= tol) {
                return finish_optimal(x, y, z, tau, iter);
            }
        }
        // Primal infeasibility: dual ray with b'y + h'z < 0.
        if (by + hz < 0.0) {
            VectorXd ray = p.G.transpose() * z;
            if (me > 0) ray += p.A.transpose() * y;
            if (inf_norm(ray) / -(by + hz) <= tol * c_scale) {
                out.status = Status::Infeasible;
                out.farkas = split_duals(p, y / -(by + hz), z / -(by + hz));
                out.v = x / tau;
                out.iterations = iter;
                return out;
            }
        }
        // Dual infeasibility: primal ray with c'x < 0.
        if (cx < 0.0) {
            double rr = inf_norm(gx + s);
            if (me > 0) rr = std::max(rr, inf_norm(p.A * x));
            if (rr / -cx <= tol * bh_scale) {
                out.status = Status::Unbounded;
                out.v = x / -cx;
                out.iterations = iter;
                return out;
            }
        }
        if (options.trace) {
            *options.trace << "iter " << iter << " tau " << tau << " kappa " << kappa << " pres "
                           << std::max(inf_norm(ry), inf_norm(rz)) / tau << " dres " << inf_norm(rx) / tau
                           << " gap " << (cx + by + hz) / tau << " mu " << (s.dot(z) + tau * kappa) / (m + 1)
                           << '\n';
        }
        if (iter == options.max_iters) break;

        const double mu = (s.dot(z) + tau * kappa) / static_cast<double>(m + 1);
        d = z.cwiseQuotient(s);
        if (!kkt.factor(d)) {
            out.status = Status::NumericalFailure;
            out.iterations = iter;
            return out;
        }

        VectorXd x1, y1, z1;
        kkt.solve(-p.c, p.b, p.h, x1, y1, z1);
        const double denom_base = p.c.dot(x1) + (me > 0 ? p.b.dot(y1) : 0.0) + p.h.dot(z1);

        struct Direction {
            VectorXd dx, dy, dz, ds;
            double dtau = 0.0, dkappa = 0.0;
        };
        auto direction = [&](double eta, const VectorXd& ds_target, double dk_target) {
            VectorXd x2, y2, z2;
            const VectorXd bx = -eta * rx;
            const VectorXd byv = me > 0 ? VectorXd(-eta * ry) : VectorXd();
            const VectorXd bz = -eta * rz - ds_target.cwiseQuotient(z);
            kkt.solve(bx, byv, bz, x2, y2, z2);
            Direction dir;
            const double num = -eta * rt - dk_target / tau - p.c.dot(x2) - (me > 0 ? p.b.dot(y2) : 0.0) - p.h.dot(z2);
            dir.dtau = num / (denom_base - kappa / tau);
            dir.dx = x2 + dir.dtau * x1;
            dir.dy = me > 0 ? VectorXd(y2 + dir.dtau * y1) : VectorXd();
            dir.dz = z2 + dir.dtau * z1;
            dir.ds = (ds_target - s.cwiseProduct(dir.dz)).cwiseQuotient(z);
            dir.dkappa = (dk_target - kappa * dir.dtau) / tau;
            return dir;
        };
        auto step_to_boundary = [&](const Direction& dir) {
            double a = std::min(max_step(s, dir.ds), max_step(z, dir.dz));
            if (dir.dtau < 0.0) a = std::min(a, -tau / dir.dtau);
            if (dir.dkappa < 0.0) a = std::min(a, -kappa / dir.dkappa);
            return a;
        };

        const VectorXd sz = s.cwiseProduct(z);
        const Direction aff = direction(1.0, -sz, -tau * kappa);
        const double alpha_aff = std::min(1.0, step_to_boundary(aff));
        const double sigma = std::pow(std::clamp(1.0 - alpha_aff, 0.0, 1.0), 3);

        const VectorXd ds_target =
            (-sz.array() + sigma * mu - aff.ds.cwiseProduct(aff.dz).array()).matrix();
        const double dk_target = -tau * kappa + sigma * mu - aff.dtau * aff.dkappa;
        const Direction dir = direction(1.0 - sigma, ds_target, dk_target);
        const double alpha = std::min(1.0, 0.99 * step_to_boundary(dir));
        if (!(alpha > 0.0) || !std::isfinite(alpha)) {
            out.status = Status::NumericalFailure;
            out.iterations = iter;
            return out;
        }

        x += alpha * dir.dx;
        if (me > 0) y += alpha * dir.dy;
        z += alpha * dir.dz;
        s += alpha * dir.ds;
        tau += alpha * dir.dtau;
        kappa += alpha * dir.dkappa;

        // Keep the homogeneous iterate at a sane scale.
        const double scale = std::max(tau, kappa);
        if (scale > 1e8 || scale < 1e-8) {
            x /= scale;
            if (me > 0) y /= scale;
            z /= scale;
            s /= scale;
            tau /= scale;
            kappa /= scale;
        }
    }

    out.status = Status::MaxIterations;
    out.v = x / tau;
    out.duals = split_duals(p, (me > 0 ? VectorXd(y / tau) : VectorXd()), z / tau);
    out.objective = lp.c.dot(out.v);
    out.kkt = verify_kkt(lp, out.v, out.duals);
    out.dual_objective = out.objective - out.kkt.gap;
    out.iterations = options.max_iters;
    return out;
}

}  // namespace sls::lp
