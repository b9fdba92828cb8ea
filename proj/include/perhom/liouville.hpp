#pragma once

// Big-box experiments behind the Liouville-type statements: entire
// solutions of the form u = x^T A x / 2 + b.x + c + v with periodic
// zero-mean v exist iff Fbar(A) equals the cell average of f; blow-down
// rescalings u(Rx)/R^2 converge to the quadratic part; full-period second
// difference quotients are bounded by (and saturate at) e^T A e / |e|^2;
// and the decomposition can be recovered from samples on a finite box.

#include "perhom/dirichlet.hpp"
#include "perhom/hbar.hpp"

#include <functional>
#include <string>
#include <vector>

namespace perhom {

struct Decomposition {
    Mat A;
    Vec b;
    double c = 0;
    TorusField v;  // zero-mean periodic part
    double residual_sup = 0;
    bool failed = false;
    std::string message;
};

/// u(x) = x^T A x / 2 + b.x + c + v(x), v extended periodically.
inline ScalarFn witness_function(const Decomposition& dec) {
    ScalarFn vfn = periodic_extension(dec.v);
    Mat A = dec.A;
    Vec b = dec.b;
    double c = dec.c;
    return [A, b, c, vfn](const Vec& x) { return 0.5 * x.dot(A * x) + b.dot(x) + c + vfn(x); };
}

struct BoxProblem {
    EllipticOperator op;
    TorusField f_periodic;
    int R_periods;      // box is Q_{2R}, i.e. [-R, R]^n with R whole periods
    int res_per_cell;
    ScalarFn boundary;  // Dirichlet data, evaluated at ghost nodes

    BoxProblem(EllipticOperator o, TorusField f, int R, int rpc, ScalarFn g)
        : op(std::move(o)), f_periodic(std::move(f)), R_periods(R), res_per_cell(rpc),
          boundary(std::move(g)) {
        if (R_periods < 1) throw ConfigError("BoxProblem: R must be >= 1 period");
        if (res_per_cell < 4 || res_per_cell % 2 != 0)
            throw ConfigError("BoxProblem: res_per_cell must be even and >= 4");
    }
};

/// Monotone-scheme solution of F(D^2 u, x) = f on Q_{2R} with Dirichlet
/// boundary data.
inline DirichletResult dirichlet_solve(const BoxProblem& pb, const SolverConfig& cfg) {
    const int n = pb.op.dim();
    DirectionSet D = DirectionSet::make(n, cfg.dirset);
    auto lat = std::make_shared<Lattice>(
        Lattice::box(n, pb.R_periods, 1.0 / pb.res_per_cell, D.reach()));
    ScalarFn f = periodic_extension(pb.f_periodic);
    return dirichlet_solve_lattice(pb.op, lat, f, pb.boundary, cfg);
}

/// Constructs the entire solution u = x^T A x/2 + b.x + c + v with the
/// corrector from the cell problem, after checking the solvability
/// criterion Fbar(A) = <f>.  Throws PropertyError("criterion violated...")
/// when the criterion fails -- the negative direction of the existence
/// theorem.  The returned residual is the interior discrete PDE residual
/// on a box of `check_periods` periods.
inline Decomposition entire_witness(const EllipticOperator& op, const TorusField& f, const Mat& A,
                                    const Vec& b, double c, const TorusGrid& grid,
                                    const SolverConfig& cfg, int check_periods = 4,
                                    double tol_existence = 1e-6) {
    require_symmetric(A, "entire_witness");
    CellProblem pb(op, A, f, grid);
    CellSolution sol = solve_cell(pb, cfg);
    if (!sol.converged) throw SolverError("entire_witness: cell solve failed: " + sol.message);
    const double fbar = mean(f);
    if (std::abs(sol.alpha - fbar) > tol_existence)
        throw PropertyError("criterion violated: |Fbar(A) - <f>| = " +
                            format_double(std::abs(sol.alpha - fbar)) + " exceeds " +
                            format_double(tol_existence));
    Decomposition dec;
    dec.A = A;
    dec.b = b;
    dec.c = c;
    dec.v = sol.v;
    ScalarFn u = witness_function(dec);
    ScalarFn ffn = periodic_extension(f);
    dec.residual_sup =
        function_residual_sup(op, ffn, u, check_periods, grid.res, cfg.dirset);
    return dec;
}

struct BlowDownCurve {
    std::vector<double> radii;
    std::vector<double> sup_error;  // e(R) = sup_{|x|<=1} |u(Rx)/R^2 - x^T A x/2|
    double fitted_order = 0;
    bool degenerate = false;  // errors at rounding level; no slope information
};

/// Blow-down curve of a box field against the quadratic profile.
inline BlowDownCurve blow_down(const LatticeField& u, const std::vector<double>& radii,
                               const Mat& A) {
    require_symmetric(A, "blow_down");
    const Lattice& L = *u.lat;
    BlowDownCurve curve;
    curve.radii = radii;
    double scale = 0;
    for (double v : u.u) scale = std::max(scale, std::abs(v));
    for (double R : radii) {
        double e = 0;
        for (std::size_t i = 0; i < L.active_count(); ++i) {
            Vec x = L.node_of_lin(L.active_lin[i]);
            if (x.norm() <= R)
                e = std::max(e, std::abs(u.u[i] - 0.5 * x.dot(A * x)) / (R * R));
        }
        curve.sup_error.push_back(e);
    }
    PowerFit pf = fit_power_law(curve.radii, curve.sup_error, 1e-13 * std::max(1.0, scale));
    curve.degenerate = pf.degenerate;
    curve.fitted_order = pf.degenerate ? 0.0 : pf.exponent;
    return curve;
}

struct SecondDiffReport {
    double sup = 0;          // sup over admissible nodes of D2_e u
    double bound = 0;        // e^T A e / |e|^2
    bool pass = false;       // sup <= bound + tol
    double equality_gap = 0; // bound - sup (>= -tol); ~0 when the sup is attained
    std::vector<double> sup_by_margin;  // sup restricted to growing interior boxes
};

/// Checks sup_x D2_e u <= e^T A e / |e|^2 for a full-period lattice vector
/// e, and reports how the sup approaches the bound on growing interior
/// regions.
inline SecondDiffReport second_difference_bound(const LatticeField& u, const Mat& A,
                                                const LatticeVector& e, int res_per_cell,
                                                double tol = 1e-8) {
    require_symmetric(A, "second_difference_bound");
    if (e.zero()) throw Error("second_difference_bound: degenerate direction");
    const Lattice& L = *u.lat;
    const int n = L.n;
    std::vector<int> off(n), moff(n);
    for (int d = 0; d < n; ++d) {
        off[d] = e.k[d] * res_per_cell;
        moff[d] = -off[d];
    }
    Vec ev(n);
    for (int d = 0; d < n; ++d) ev(d) = e.k[d];
    const double len2 = ev.squaredNorm();

    SecondDiffReport rep;
    rep.bound = ev.dot(A * ev) / len2;
    double sup = -std::numeric_limits<double>::infinity();
    std::vector<std::pair<double, double>> by_radius;  // (max |x|_inf, quotient)
    for (std::size_t i = 0; i < L.active_count(); ++i) {
        std::int64_t lin = L.active_lin[i];
        std::int64_t lp = L.offset_lin(lin, off), lm = L.offset_lin(lin, moff);
        if (lp < 0 || lm < 0) continue;
        std::int32_t cp = L.idx[static_cast<std::size_t>(lp)];
        std::int32_t cm = L.idx[static_cast<std::size_t>(lm)];
        if (cp < 0 || cm < 0) continue;
        double q = (u.u[cp] + u.u[cm] - 2 * u.u[i]) / len2;
        sup = std::max(sup, q);
        Vec x = L.node_of_lin(lin);
        by_radius.emplace_back(x.cwiseAbs().maxCoeff(), q);
    }
    if (by_radius.empty()) throw Error("second_difference_bound: no admissible nodes");
    rep.sup = sup;
    rep.pass = sup <= rep.bound + tol;
    rep.equality_gap = rep.bound - sup;
    // sup over nested boxes |x|_inf <= m periods, m = 1, 2, ...
    double max_r = 0;
    for (auto& pr : by_radius) max_r = std::max(max_r, pr.first);
    for (int m = 1; m <= static_cast<int>(std::ceil(max_r)); ++m) {
        double s = -std::numeric_limits<double>::infinity();
        for (auto& pr : by_radius)
            if (pr.first <= m) s = std::max(s, pr.second);
        if (std::isfinite(s)) rep.sup_by_margin.push_back(s);
    }
    return rep;
}

/// Recovers (A, b, c, v) from box samples: A from full-period second
/// differences, b from full-period first differences, then c and v by
/// folding the residual into one cell and averaging over periods.  All
/// estimators use nodes at least `margin_periods` inside the boundary.
inline Decomposition fit_decomposition(const LatticeField& u, int res_per_cell,
                                       int margin_periods = 2, double fail_threshold = 1e-2,
                                       const std::function<bool(const Vec&)>& region = nullptr) {
    const Lattice& L = *u.lat;
    const int n = L.n;
    const int rpc = res_per_cell;
    if (rpc % 2 != 0) throw ConfigError("fit_decomposition: res_per_cell must be even");

    // default fitting region: active nodes at least margin_periods periods
    // inside the box edge, so that all x +/- e stay interior for the
    // one-period difference directions
    std::function<bool(const Vec&)> in_interior = region;
    if (!in_interior) {
        double box_half = 0;
        for (std::size_t i = 0; i < L.active_count(); ++i) {
            Vec x = L.node_of_lin(L.active_lin[i]);
            box_half = std::max(box_half, x.cwiseAbs().maxCoeff());
        }
        const double interior = box_half - margin_periods;
        if (interior < 1.0)
            throw ConfigError("fit_decomposition: box too small for the requested margin");
        in_interior = [interior](const Vec& x) { return x.cwiseAbs().maxCoeff() <= interior; };
    }

    auto node_offsets = [&](const Eigen::VectorXi& e) {
        std::vector<int> off(n);
        for (int d = 0; d < n; ++d) off[d] = e(d) * rpc;
        return off;
    };

    // second differences along e_i and e_i + e_j
    Mat A = Mat::Zero(n, n);
    auto avg_quotient = [&](const Eigen::VectorXi& e) {
        std::vector<int> off = node_offsets(e), moff = off;
        for (int& v : moff) v = -v;
        double len2 = e.cast<double>().squaredNorm();
        double sum = 0;
        std::size_t cnt = 0;
        for (std::size_t i = 0; i < L.active_count(); ++i) {
            std::int64_t lin = L.active_lin[i];
            Vec x = L.node_of_lin(lin);
            if (!in_interior(x)) continue;
            std::int64_t lp = L.offset_lin(lin, off), lm = L.offset_lin(lin, moff);
            if (lp < 0 || lm < 0) continue;
            std::int32_t cp = L.idx[static_cast<std::size_t>(lp)];
            std::int32_t cm = L.idx[static_cast<std::size_t>(lm)];
            if (cp < 0 || cm < 0) continue;
            sum += (u.u[cp] + u.u[cm] - 2 * u.u[i]) / len2;
            ++cnt;
        }
        if (cnt == 0) throw ConfigError("fit_decomposition: no interior nodes for a direction");
        return sum / static_cast<double>(cnt);
    };
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXi e = Eigen::VectorXi::Zero(n);
        e(i) = 1;
        A(i, i) = avg_quotient(e);
    }
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            Eigen::VectorXi e = Eigen::VectorXi::Zero(n);
            e(i) = 1;
            e(j) = 1;
            double q = avg_quotient(e);  // (A_ii + 2A_ij + A_jj) / 2
            A(i, j) = A(j, i) = q - 0.5 * (A(i, i) + A(j, j));
        }

    // first differences: (u(x+e_i) - u(x-e_i))/2 = (A x)_i + b_i
    Vec b = Vec::Zero(n);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXi e = Eigen::VectorXi::Zero(n);
        e(i) = 1;
        std::vector<int> off = node_offsets(e), moff = off;
        for (int& v : moff) v = -v;
        double sum = 0;
        std::size_t cnt = 0;
        for (std::size_t k = 0; k < L.active_count(); ++k) {
            std::int64_t lin = L.active_lin[k];
            Vec x = L.node_of_lin(lin);
            if (!in_interior(x)) continue;
            std::int64_t lp = L.offset_lin(lin, off), lm = L.offset_lin(lin, moff);
            if (lp < 0 || lm < 0) continue;
            std::int32_t cp = L.idx[static_cast<std::size_t>(lp)];
            std::int32_t cm = L.idx[static_cast<std::size_t>(lm)];
            if (cp < 0 || cm < 0) continue;
            sum += 0.5 * (u.u[cp] - u.u[cm]) - (A * x)(i);
            ++cnt;
        }
        if (cnt == 0) throw ConfigError("fit_decomposition: no interior nodes for a direction");
        b(i) = sum / static_cast<double>(cnt);
    }

    // fold the residual r = u - quadratic - linear into one cell
    TorusGrid tg(n, rpc);
    PeriodicLookup lookup(L, tg);
    TorusField folded(tg);
    std::vector<std::size_t> counts(tg.node_count(), 0);
    for (std::size_t i = 0; i < L.active_count(); ++i) {
        std::int64_t lin = L.active_lin[i];
        Vec x = L.node_of_lin(lin);
        if (!in_interior(x)) continue;
        double r = u.u[i] - 0.5 * x.dot(A * x) - b.dot(x);
        std::size_t t = lookup.torus_index(L, lin);
        folded.values[t] += r;
        ++counts[t];
    }
    for (std::size_t t = 0; t < folded.values.size(); ++t) {
        if (counts[t] == 0) throw ConfigError("fit_decomposition: empty fold bin");
        folded.values[t] /= static_cast<double>(counts[t]);
    }
    double c = mean(folded);
    Decomposition dec;
    dec.A = A;
    dec.b = b;
    dec.c = c;
    dec.v = project_zero_mean(folded);

    double resid = 0;
    for (std::size_t i = 0; i < L.active_count(); ++i) {
        std::int64_t lin = L.active_lin[i];
        Vec x = L.node_of_lin(lin);
        if (!in_interior(x)) continue;
        std::size_t t = lookup.torus_index(L, lin);
        double model = 0.5 * x.dot(A * x) + b.dot(x) + c + dec.v.values[t];
        resid = std::max(resid, std::abs(u.u[i] - model));
    }
    dec.residual_sup = resid;
    if (resid > fail_threshold) {
        dec.failed = true;
        dec.message = "decomposition failed: interior residual " + format_double(resid) +
                      " exceeds " + format_double(fail_threshold);
    }
    return dec;
}

/// Samples a globally defined function onto a fully-active box lattice
/// (pad ghost layers excluded), for feeding constructed solutions into the
/// box diagnostics.
inline LatticeField sample_box_field(const ScalarFn& u, int n, int R_periods, int res_per_cell) {
    auto lat = std::make_shared<Lattice>(Lattice::box(n, R_periods, 1.0 / res_per_cell, 1));
    LatticeField fld;
    fld.u.resize(lat->active_count());
    for (std::size_t i = 0; i < lat->active_count(); ++i)
        fld.u[i] = u(lat->node_of_lin(lat->active_lin[i]));
    fld.lat = std::move(lat);
    return fld;
}

}  // namespace perhom
