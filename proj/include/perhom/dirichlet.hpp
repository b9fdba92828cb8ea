#pragma once

// Monotone-scheme Dirichlet solves of F(D^2 u, x) = f on lattice domains
// (boxes and annuli) with policy iteration for Bellman/Pucci operators.
// Linear solves go direct (sparse LU) on small problems and matrix-free
// SSOR-BiCGSTAB on large ones.

#include "perhom/cell.hpp"
#include "perhom/lattice.hpp"

#include <functional>
#include <memory>

namespace perhom {

using ScalarFn = std::function<double(const Vec&)>;

/// Exact congruence map between an aligned lattice and the torus grid.
/// Requires h = 1/res with even res and lattice lo on the h-grid.
struct PeriodicLookup {
    TorusGrid tg;
    std::vector<long long> shift;  // per-axis index shift into the torus grid

    PeriodicLookup(const Lattice& lat, const TorusGrid& g) : tg(g) {
        if (std::abs(lat.h * g.res - 1.0) > 1e-12)
            throw ConfigError("PeriodicLookup: lattice spacing is not 1/res");
        if (g.res % 2 != 0) throw ConfigError("PeriodicLookup: torus res must be even");
        shift.resize(lat.n);
        for (int d = 0; d < lat.n; ++d) {
            double s = lat.lo(d) / lat.h;
            long long si = std::llround(s);
            if (std::abs(s - si) > 1e-9)
                throw ConfigError("PeriodicLookup: lattice is not aligned to the unit cell");
            shift[d] = si + g.res / 2;
        }
    }

    std::size_t torus_index(const Lattice& lat, std::int64_t lin) const {
        std::size_t idx = 0;
        // decompose lin into per-axis indices (row-major as in Lattice)
        std::array<int, 8> mi{};
        for (int d = lat.n - 1; d >= 0; --d) {
            mi[d] = static_cast<int>(lin % lat.dims[d]);
            lin /= lat.dims[d];
        }
        for (int d = 0; d < lat.n; ++d) idx = idx * tg.res + tg.wrap(mi[d] + shift[d]);
        return idx;
    }
};

/// Periodic extension lookup for a torus field at arbitrary points
/// (nearest node; exact on aligned lattices).
inline ScalarFn periodic_extension(const TorusField& f) {
    auto fld = std::make_shared<TorusField>(f);
    return [fld](const Vec& x) { return fld->values[fld->grid.nearest_node(x)]; };
}

namespace detail {

/// Discretization tables for F(D^2 u, x) on a masked lattice.
class LatticeScheme {
public:
    LatticeScheme(const EllipticOperator& op, const Lattice& lat, const DirectionSet& D)
        : op_(&op), lat_(&lat), D_(D) {
        dstride_.clear();
        for (const auto& p : D_.dirs) {
            std::int64_t s = 0;
            for (int d = 0; d < lat.n; ++d) s += static_cast<std::int64_t>(p(d)) * lat.strides[d];
            dstride_.push_back(s);
        }
        if (op.kind() == EllipticOperator::Kind::Pucci) {
            if (D_.frames.empty()) throw SolverError("Pucci discretization needs orthogonal frames");
        } else {
            const auto& brs = op.branches();
            bw_.resize(brs.size());
            std::vector<double> wts;
            const int nd = D_.count();
            for (std::size_t b = 0; b < brs.size(); ++b) {
                bw_[b].assign(lat.active_count() * nd, 0.0);
                for (std::size_t i = 0; i < lat.active_count(); ++i) {
                    Mat a = brs[b].eval(lat.node_of_lin(lat.active_lin[i]));
                    if (!decompose_spd(a, D_, wts))
                        throw SolverError(
                            "ellipticity violation: coefficient not representable on stencil '" +
                            D_.id + "'");
                    for (int k = 0; k < nd; ++k) bw_[b][i * nd + k] = wts[k];
                }
            }
        }
    }

    const DirectionSet& dirset() const { return D_; }
    bool is_pucci() const { return op_->kind() == EllipticOperator::Kind::Pucci; }
    std::size_t branch_count() const { return is_pucci() ? D_.frames.size() : bw_.size(); }

    /// Raw second difference from the extended value array (closure values
    /// at inactive nodes).
    double raw_diff(const double* uext, std::int64_t lin, int k) const {
        return (uext[lin + dstride_[k]] + uext[lin - dstride_[k]] - 2.0 * uext[lin]) /
               (lat_->h * lat_->h);
    }

    double branch_eval(const double* uext, std::size_t i, std::int32_t b, NodePolicy* pol) const {
        std::int64_t lin = lat_->active_lin[i];
        if (!is_pucci()) {
            const int nd = D_.count();
            double s = 0;
            for (int k = 0; k < nd; ++k) {
                double wk = bw_[b][i * nd + k];
                if (wk != 0) s += wk * raw_diff(uext, lin, k);
            }
            if (pol) *pol = NodePolicy{b, 0, 0};
            return s;
        }
        const auto& frame = D_.frames[b];
        const bool plus = op_->pucci_sign() == PucciSign::Plus;
        double s = 0;
        std::uint32_t signs = 0;
        for (int idim = 0; idim < lat_->n; ++idim) {
            int k = frame[idim];
            double si = raw_diff(uext, lin, k) / D_.len2[k];
            bool pos = si > 0;
            double coeff = plus ? (pos ? op_->Lambda() : op_->lambda())
                                : (pos ? op_->lambda() : op_->Lambda());
            s += coeff * si;
            if (pos) signs |= (1u << idim);
        }
        if (pol) *pol = NodePolicy{0, b, signs};
        return s;
    }

    double eval(const double* uext, std::size_t i, NodePolicy* pol = nullptr) const {
        const bool maximize = is_pucci() && op_->pucci_sign() == PucciSign::Plus;
        NodePolicy best_pol, cur;
        double best = branch_eval(uext, i, 0, &best_pol);
        for (std::int32_t b = 1; b < static_cast<std::int32_t>(branch_count()); ++b) {
            double val = branch_eval(uext, i, b, &cur);
            if (maximize ? (val > best) : (val < best)) {
                best = val;
                best_pol = cur;
            }
        }
        if (pol) *pol = best_pol;
        return best + op_->offset();
    }

    void improve_policy(const double* uext, std::vector<NodePolicy>& pol, double tie_tol) const {
        for (std::size_t i = 0; i < lat_->active_count(); ++i) {
            NodePolicy cand;
            double best = eval(uext, i, &cand);
            double incumbent =
                branch_eval(uext, i, is_pucci() ? pol[i].frame : pol[i].branch, nullptr) +
                op_->offset();
            if (std::abs(incumbent - best) > tie_tol) {
                pol[i] = cand;
            } else if (is_pucci()) {
                NodePolicy same;
                branch_eval(uext, i, pol[i].frame, &same);
                pol[i] = same;
            }
        }
    }

    void policy_weights(const NodePolicy& p, std::size_t i, double* w_out, double& c_out) const {
        const int nd = D_.count();
        std::fill(w_out, w_out + nd, 0.0);
        c_out = op_->offset();
        if (!is_pucci()) {
            for (int k = 0; k < nd; ++k) w_out[k] = bw_[p.branch][i * nd + k];
            return;
        }
        const auto& frame = D_.frames[p.frame];
        const bool plus = op_->pucci_sign() == PucciSign::Plus;
        for (int idim = 0; idim < lat_->n; ++idim) {
            int k = frame[idim];
            bool pos = (p.signs >> idim) & 1u;
            double coeff = plus ? (pos ? op_->Lambda() : op_->lambda())
                                : (pos ? op_->lambda() : op_->Lambda());
            w_out[k] = coeff / D_.len2[k];
        }
    }

private:
    const EllipticOperator* op_;
    const Lattice* lat_;
    DirectionSet D_;
    std::vector<std::int64_t> dstride_;
    std::vector<std::vector<double>> bw_;
};

}  // namespace detail

struct DirichletResult {
    LatticeField u;
    double residual_sup = 0;
    bool converged = false;
    int policy_sweeps = 0;
    int krylov_iterations = 0;
};

/// Solve F(D^2 u, x) = f on the active nodes of a lattice with Dirichlet
/// closure g at inactive nodes.  Policy iteration wraps the linear solves;
/// linear operators finish in one pass.
inline DirichletResult dirichlet_solve_lattice(const EllipticOperator& op,
                                               std::shared_ptr<const Lattice> lat,
                                               const ScalarFn& f, const ScalarFn& closure,
                                               const SolverConfig& cfg) {
    const Lattice& L = *lat;
    DirectionSet D = DirectionSet::make(L.n, cfg.dirset);
    detail::LatticeScheme S(op, L, D);
    const std::size_t N = L.active_count();

    // extended array: closure at inactive nodes, iterate at active nodes
    std::vector<double> uext(static_cast<std::size_t>(L.bounding_count()), 0.0);
    for (std::int64_t lin = 0; lin < L.bounding_count(); ++lin)
        if (L.idx[static_cast<std::size_t>(lin)] < 0)
            uext[static_cast<std::size_t>(lin)] = closure(L.node_of_lin(lin));

    std::vector<double> fval(N);
    for (std::size_t i = 0; i < N; ++i) fval[i] = f(L.node_of_lin(L.active_lin[i]));

    std::vector<double> u(N, 0.0);
    auto scatter = [&]() {
        for (std::size_t i = 0; i < N; ++i)
            uext[static_cast<std::size_t>(L.active_lin[i])] = u[i];
    };
    scatter();

    std::vector<detail::NodePolicy> pol(N);
    for (std::size_t i = 0; i < N; ++i) S.eval(uext.data(), i, &pol[i]);

    auto residual_sup = [&]() {
        double r = 0;
        for (std::size_t i = 0; i < N; ++i)
            r = std::max(r, std::abs(S.eval(uext.data(), i) - fval[i]));
        return r;
    };

    DirichletResult out;
    // sparse LU fill-in explodes with dimension; the auto rule goes
    // iterative much earlier in 3-D
    const std::size_t direct_cap = L.n <= 2 ? cfg.direct_limit : cfg.direct_limit / 16;
    const bool use_direct = cfg.linsolver == "direct" ||
                            (cfg.linsolver != "iterative" && N <= direct_cap);

    StencilProblem P;
    double res = std::numeric_limits<double>::infinity();
    std::vector<detail::NodePolicy> prev_pol;
    double prev_res = std::numeric_limits<double>::infinity();
    int it = 0;
    while (it < cfg.max_iters) {
        ++it;
        P.init(L, D.dirs);
        const int nd = P.ndir();
        double c = 0;
        for (std::size_t i = 0; i < N; ++i) {
            S.policy_weights(pol[i], i, &P.w[i * nd], c);
            P.rhs[i] = c - fval[i];
        }
        P.finalize(closure);
        if (use_direct) {
            sparse_lu_solve(P, u);
        } else {
            KrylovResult kr = bicgstab(P, u, cfg.lin_tol, cfg.lin_maxit);
            out.krylov_iterations += kr.iterations;
            if (!kr.converged)
                throw SolverError("dirichlet solve: BiCGSTAB stalled at rel_residual " +
                                  format_double(kr.rel_residual));
        }
        scatter();
        res = residual_sup();
        if (res <= cfg.tol) break;
        prev_pol = pol;
        S.improve_policy(uext.data(), pol, cfg.policy_tie_tol);
        if (pol == prev_pol && res >= prev_res) break;
        prev_res = res;
    }

    out.u.lat = std::move(lat);
    out.u.u = std::move(u);
    out.residual_sup = res;
    out.policy_sweeps = it;
    out.converged = res <= cfg.tol;
    return out;
}

/// Discrete interior residual sup |F_h(D^2 u, x) - f(x)| of an arbitrary
/// globally defined function, sampled on an aligned box lattice Q_{2R}
/// with R = `half_periods` whole periods and `res_per_cell` nodes per period.
inline double function_residual_sup(const EllipticOperator& op, const ScalarFn& f,
                                    const ScalarFn& u, int half_periods, int res_per_cell,
                                    const std::string& dirset = "auto") {
    const int n = op.dim();
    DirectionSet D = DirectionSet::make(n, dirset);
    double R = half_periods;
    double h = 1.0 / res_per_cell;
    auto lat = std::make_shared<Lattice>(Lattice::box(n, R, h, D.reach()));
    detail::LatticeScheme S(op, *lat, D);
    std::vector<double> uext(static_cast<std::size_t>(lat->bounding_count()));
    for (std::int64_t lin = 0; lin < lat->bounding_count(); ++lin)
        uext[static_cast<std::size_t>(lin)] = u(lat->node_of_lin(lin));
    double r = 0;
    for (std::size_t i = 0; i < lat->active_count(); ++i) {
        Vec x = lat->node_of_lin(lat->active_lin[i]);
        r = std::max(r, std::abs(S.eval(uext.data(), i) - f(x)));
    }
    return r;
}

}  // namespace perhom
