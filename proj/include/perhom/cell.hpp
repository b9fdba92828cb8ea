#pragma once

// Periodic cell problem on the unit torus:
//
//   F(A + D^2 v, x) - alpha = f(x) - <f>,   v periodic with zero mean,
//
// solved for the corrector v and the ergodic constant alpha.  The monotone
// discretization writes every equation as a positively weighted combination
// of directional second differences; (v, alpha) solve an augmented linear
// system with the zero-mean constraint as the extra row and -alpha as the
// extra column.  Bellman minima and Pucci extremal operators run Howard
// policy iteration around that saddle solve.

#include "perhom/lattice.hpp"
#include "perhom/operators.hpp"
#include "perhom/stencil.hpp"
#include "perhom/torus.hpp"

#include <Eigen/Sparse>

#include <optional>
#include <string>
#include <vector>

namespace perhom {

struct SolverConfig {
    double tol = 1e-10;       // sup-norm residual target for the discrete equation
    int max_iters = 200;      // policy sweeps
    std::string dirset = "auto";
    std::string linsolver = "auto";     // direct | iterative | auto
    double lin_tol = 1e-12;             // Krylov relative tolerance
    int lin_maxit = 50000;
    std::size_t direct_limit = 150000;  // unknown count above which auto goes iterative
    double policy_tie_tol = 1e-14;      // incumbent wins ties within this
};

struct CellProblem {
    EllipticOperator op;
    Mat A;
    TorusField f;
    TorusGrid grid;

    CellProblem(EllipticOperator o, Mat A_, TorusField f_, TorusGrid g)
        : op(std::move(o)), A(std::move(A_)), f(std::move(f_)), grid(g) {
        require_symmetric(A, "CellProblem");
        if (grid.res < 8) throw ConfigError("CellProblem: grid res must be >= 8");
        if (!(f.grid == grid)) throw ConfigError("CellProblem: datum grid mismatch");
        if (op.dim() != grid.dim) throw ConfigError("CellProblem: operator dimension mismatch");
    }
};

struct CellSolution {
    TorusField v;
    double alpha = 0;
    double residual_sup = 0;
    int iterations = 0;
    bool converged = false;
    std::string message;
};

namespace detail {

struct NodePolicy {
    std::int32_t branch = 0;  // Bellman branch
    std::int32_t frame = 0;   // Pucci frame
    std::uint32_t signs = 0;  // Pucci per-direction sign bits (1 => positive part)
    bool operator==(const NodePolicy&) const = default;
};

/// Per-grid discretization tables for one (operator, A) pair on the torus.
class TorusScheme {
public:
    TorusScheme(const EllipticOperator& op, const Mat& A, const TorusGrid& g,
                const DirectionSet& D)
        : op_(&op), A_(A), g_(g), D_(D) {
        const std::size_t N = g.node_count();
        const int nd = D.count();
        nbr_plus_.resize(N * nd);
        nbr_minus_.resize(N * nd);
        std::vector<int> mi(g.dim), ms(g.dim);
        for (std::size_t i = 0; i < N; ++i) {
            g.multi_index(i, mi);
            for (int k = 0; k < nd; ++k) {
                for (int d = 0; d < g.dim; ++d) ms[d] = mi[d] + D.dirs[k](d);
                nbr_plus_[i * nd + k] = g.index(ms);
                for (int d = 0; d < g.dim; ++d) ms[d] = mi[d] - D.dirs[k](d);
                nbr_minus_[i * nd + k] = g.index(ms);
            }
        }

        if (op.kind() == EllipticOperator::Kind::Pucci) {
            if (D.frames.empty()) throw SolverError("Pucci discretization needs orthogonal frames");
            qAq_.resize(D.frames.size());
            for (std::size_t fr = 0; fr < D.frames.size(); ++fr) {
                qAq_[fr].resize(g.dim);
                for (int i = 0; i < g.dim; ++i) {
                    const auto& p = D.dirs[D.frames[fr][i]].cast<double>();
                    qAq_[fr][i] = p.dot(A * p) / p.squaredNorm();
                }
            }
        } else {
            const auto& brs = op.branches();
            bw_.resize(brs.size());
            bc_.resize(brs.size());
            std::vector<double> wts;
            for (std::size_t b = 0; b < brs.size(); ++b) {
                bw_[b].assign(N * nd, 0.0);
                bc_[b].assign(N, 0.0);
                for (std::size_t i = 0; i < N; ++i) {
                    Mat a = brs[b].eval(g.node(i));
                    if (!decompose_spd(a, D, wts))
                        throw SolverError(
                            "ellipticity violation: coefficient not representable on stencil '" +
                            D.id + "' at node " + std::to_string(i));
                    for (int k = 0; k < nd; ++k) bw_[b][i * nd + k] = wts[k];
                    bc_[b][i] = (a.array() * A.array()).sum();
                }
            }
        }
    }

    int ndir() const { return D_.count(); }
    const DirectionSet& dirset() const { return D_; }
    const TorusGrid& grid() const { return g_; }
    bool is_pucci() const { return op_->kind() == EllipticOperator::Kind::Pucci; }
    std::size_t branch_count() const { return is_pucci() ? D_.frames.size() : bw_.size(); }

    double raw_diff(const double* v, std::size_t i, int k) const {
        const int nd = D_.count();
        return (v[nbr_plus_[i * nd + k]] + v[nbr_minus_[i * nd + k]] - 2.0 * v[i]) /
               (g_.spacing * g_.spacing);
    }

    /// Value of one Bellman branch / one Pucci frame at a node.
    double branch_eval(const double* v, std::size_t i, std::int32_t b, NodePolicy* pol) const {
        if (!is_pucci()) {
            const int nd = D_.count();
            double s = bc_[b][i];
            for (int k = 0; k < nd; ++k) {
                double wk = bw_[b][i * nd + k];
                if (wk != 0) s += wk * raw_diff(v, i, k);
            }
            if (pol) *pol = NodePolicy{b, 0, 0};
            return s;
        }
        const auto& frame = D_.frames[b];
        const bool plus = op_->pucci_sign() == PucciSign::Plus;
        double s = 0;
        std::uint32_t signs = 0;
        for (int idim = 0; idim < g_.dim; ++idim) {
            int k = frame[idim];
            double si = qAq_[b][idim] + raw_diff(v, i, k) / D_.len2[k];
            bool pos = si > 0;
            double coeff = plus ? (pos ? op_->Lambda() : op_->lambda())
                                : (pos ? op_->lambda() : op_->Lambda());
            s += coeff * si;
            if (pos) signs |= (1u << idim);
        }
        if (pol) *pol = NodePolicy{0, b, signs};
        return s;
    }

    /// Nonlinear discrete operator F_h(A + D^2 v, x_i) with optimal policy.
    double eval(const double* v, std::size_t i, NodePolicy* pol = nullptr) const {
        const bool maximize = is_pucci() && op_->pucci_sign() == PucciSign::Plus;
        NodePolicy best_pol, cur_pol;
        double best = branch_eval(v, i, 0, &best_pol);
        for (std::int32_t b = 1; b < static_cast<std::int32_t>(branch_count()); ++b) {
            double val = branch_eval(v, i, b, &cur_pol);
            if (maximize ? (val > best) : (val < best)) {
                best = val;
                best_pol = cur_pol;
            }
        }
        if (pol) *pol = best_pol;
        return best + op_->offset();
    }

    /// Policy refresh with incumbent tie-breaking (prevents cycling).
    void improve_policy(const double* v, std::vector<NodePolicy>& pol, double tie_tol) const {
        const bool maximize = is_pucci() && op_->pucci_sign() == PucciSign::Plus;
        for (std::size_t i = 0; i < g_.node_count(); ++i) {
            NodePolicy cand;
            double best = eval(v, i, &cand);
            double incumbent =
                branch_eval(v, i, is_pucci() ? pol[i].frame : pol[i].branch, nullptr) +
                op_->offset();
            if (std::abs(incumbent - best) > tie_tol) {
                // for Pucci, sign refresh is part of the policy even on the same frame
                pol[i] = cand;
            } else if (is_pucci()) {
                NodePolicy same;
                branch_eval(v, i, pol[i].frame, &same);
                pol[i] = same;
            }
            (void)maximize;
        }
    }

    /// Weights, constant term and neighbor tables of the frozen policy.
    void policy_row(const NodePolicy& p, std::size_t i, std::vector<double>& w_out,
                    double& c_out) const {
        const int nd = D_.count();
        w_out.assign(nd, 0.0);
        if (!is_pucci()) {
            for (int k = 0; k < nd; ++k) w_out[k] = bw_[p.branch][i * nd + k];
            c_out = bc_[p.branch][i] + op_->offset();
            return;
        }
        const auto& frame = D_.frames[p.frame];
        const bool plus = op_->pucci_sign() == PucciSign::Plus;
        c_out = op_->offset();
        for (int idim = 0; idim < g_.dim; ++idim) {
            int k = frame[idim];
            bool pos = (p.signs >> idim) & 1u;
            double coeff = plus ? (pos ? op_->Lambda() : op_->lambda())
                                : (pos ? op_->lambda() : op_->Lambda());
            w_out[k] = coeff / D_.len2[k];
            c_out += coeff * qAq_[p.frame][idim];
        }
    }

    std::size_t nbr(std::size_t i, int k, int sgn) const {
        return sgn > 0 ? nbr_plus_[i * ndir() + k] : nbr_minus_[i * ndir() + k];
    }

private:
    const EllipticOperator* op_;
    Mat A_;
    TorusGrid g_;
    DirectionSet D_;
    std::vector<std::size_t> nbr_plus_, nbr_minus_;
    std::vector<std::vector<double>> bw_;  // branch weights [b][node*ndir]
    std::vector<std::vector<double>> bc_;  // branch zeroth term tr(a_b(x) A)
    std::vector<std::vector<double>> qAq_; // Pucci: [frame][dim]
};

/// One linear saddle solve:  L v - alpha = rhs,  mean(v) = 0.
inline void saddle_solve(const TorusScheme& S, const std::vector<NodePolicy>& pol,
                         const std::vector<double>& rhs, std::vector<double>& v, double& alpha) {
    const TorusGrid& g = S.grid();
    const std::size_t N = g.node_count();
    const double ih2 = 1.0 / (g.spacing * g.spacing);
    const int nd = S.ndir();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(N * (2 * nd + 2) + N);
    std::vector<double> w(nd);
    double c = 0;
    Vec b(N + 1);
    for (std::size_t i = 0; i < N; ++i) {
        S.policy_row(pol[i], i, w, c);
        double dsum = 0;
        for (int k = 0; k < nd; ++k) {
            if (w[k] == 0) continue;
            dsum += 2.0 * w[k] * ih2;
            // combine duplicate column hits via triplet summation
            trips.emplace_back(static_cast<int>(i), static_cast<int>(S.nbr(i, k, +1)), w[k] * ih2);
            trips.emplace_back(static_cast<int>(i), static_cast<int>(S.nbr(i, k, -1)), w[k] * ih2);
        }
        trips.emplace_back(static_cast<int>(i), static_cast<int>(i), -dsum);
        trips.emplace_back(static_cast<int>(i), static_cast<int>(N), -1.0);
        trips.emplace_back(static_cast<int>(N), static_cast<int>(i), 1.0 / static_cast<double>(N));
        b(static_cast<Eigen::Index>(i)) = rhs[i] - c;
    }
    b(static_cast<Eigen::Index>(N)) = 0.0;
    Eigen::SparseMatrix<double> M(static_cast<int>(N + 1), static_cast<int>(N + 1));
    M.setFromTriplets(trips.begin(), trips.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(M);
    if (lu.info() != Eigen::Success)
        throw SolverError("ellipticity violation: saddle factorization failed");
    Vec sol = lu.solve(b);
    v.assign(sol.data(), sol.data() + N);
    alpha = sol(static_cast<Eigen::Index>(N));
}

}  // namespace detail

inline CellSolution solve_cell(const CellProblem& pb, const SolverConfig& cfg,
                               const TorusField* v_init = nullptr,
                               std::optional<double> alpha_init = std::nullopt) {
    const TorusGrid& g = pb.grid;
    const std::size_t N = g.node_count();
    DirectionSet D = DirectionSet::make(g.dim, cfg.dirset);
    detail::TorusScheme S(pb.op, pb.A, g, D);

    const double fbar = mean(pb.f);
    std::vector<double> rhs(N);
    for (std::size_t i = 0; i < N; ++i) rhs[i] = pb.f.values[i] - fbar;

    std::vector<double> v(N, 0.0);
    if (v_init) {
        if (!(v_init->grid == g)) throw ConfigError("solve_cell: initial iterate grid mismatch");
        v = v_init->values;
        double m = kahan_mean(v);
        for (double& x : v) x -= m;
    }
    double alpha;
    if (alpha_init) {
        alpha = *alpha_init;
    } else {
        std::vector<double> f0(N);
        for (std::size_t i = 0; i < N; ++i) f0[i] = S.eval(v.data(), i) - pb.f.values[i] + fbar;
        alpha = kahan_mean(f0);
    }

    std::vector<detail::NodePolicy> pol(N);
    for (std::size_t i = 0; i < N; ++i) S.eval(v.data(), i, &pol[i]);

    CellSolution best;
    best.alpha = alpha;
    best.residual_sup = std::numeric_limits<double>::infinity();

    auto residual_sup = [&](const std::vector<double>& vv, double aa) {
        double r = 0;
        for (std::size_t i = 0; i < N; ++i)
            r = std::max(r, std::abs(S.eval(vv.data(), i) - aa - rhs[i]));
        return r;
    };

    double res = residual_sup(v, alpha);
    auto stash_best = [&](const std::vector<double>& vv, double aa, double rr, int it) {
        if (rr < best.residual_sup) {
            best.v.grid = g;
            best.v.values = vv;
            best.alpha = aa;
            best.residual_sup = rr;
            best.iterations = it;
        }
    };
    stash_best(v, alpha, res, 0);

    std::vector<detail::NodePolicy> prev_pol;
    double prev_res = std::numeric_limits<double>::infinity();
    int it = 0;
    while (res > cfg.tol && it < cfg.max_iters) {
        ++it;
        detail::saddle_solve(S, pol, rhs, v, alpha);
        res = residual_sup(v, alpha);
        stash_best(v, alpha, res, it);
        prev_pol = pol;
        S.improve_policy(v.data(), pol, cfg.policy_tie_tol);
        if (pol == prev_pol && res >= prev_res) break;  // stationary policy
        prev_res = res;
    }

    CellSolution out = best;
    out.v = project_zero_mean(out.v);
    out.converged = out.residual_sup <= cfg.tol;
    out.iterations = it;
    if (!out.converged)
        out.message = it >= cfg.max_iters
                          ? "not converged: max_iters reached, best iterate attached"
                          : "not converged: policy iteration stagnated, best iterate attached";
    return out;
}

struct UniquenessReport {
    bool pass = true;
    double alpha_spread = 0;
    double v_spread_sup = 0;
    std::vector<double> alphas;
    std::string message;
};

/// Re-runs solve_cell from several seeded initial iterates; the solutions
/// must agree within 10x the solver tolerance.
inline UniquenessReport uniqueness_probe(const CellProblem& pb, const SolverConfig& cfg,
                                         const std::vector<std::uint64_t>& seeds) {
    if (seeds.size() < 2) throw ConfigError("uniqueness_probe: need >= 2 seeds");
    UniquenessReport rep;
    std::vector<CellSolution> sols;
    for (std::uint64_t s : seeds) {
        Rng rng(s);
        TorusField v0(pb.grid);
        for (double& x : v0.values) x = rng.gaussian();
        v0 = project_zero_mean(v0);
        CellSolution cs = solve_cell(pb, cfg, &v0);
        if (!cs.converged) {
            rep.pass = false;
            rep.message = "seed " + std::to_string(s) + ": " + cs.message;
        }
        rep.alphas.push_back(cs.alpha);
        sols.push_back(std::move(cs));
    }
    for (std::size_t a = 0; a < sols.size(); ++a)
        for (std::size_t b = a + 1; b < sols.size(); ++b) {
            rep.alpha_spread = std::max(rep.alpha_spread, std::abs(sols[a].alpha - sols[b].alpha));
            double vs = 0;
            for (std::size_t i = 0; i < sols[a].v.values.size(); ++i)
                vs = std::max(vs, std::abs(sols[a].v.values[i] - sols[b].v.values[i]));
            rep.v_spread_sup = std::max(rep.v_spread_sup, vs);
        }
    if (rep.alpha_spread > 10 * cfg.tol || rep.v_spread_sup > 10 * cfg.tol) {
        rep.pass = false;
        if (rep.message.empty())
            rep.message = "solutions from distinct initial iterates disagree";
    }
    return rep;
}

}  // namespace perhom
