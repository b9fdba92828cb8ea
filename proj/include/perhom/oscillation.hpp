#pragma once

// The oscillation of F in x:  beta(x,x0) = sup_M |F(M,x)-F(M,x0)| / ||M||
// (Frobenius norm).  For linear operators the supremum is attained in
// Frobenius duality and equals ||a(x)-a(x0)||_F; for other variants a
// normalized probe set yields a certified lower bound, and reports say
// which route was used.

#include "perhom/operators.hpp"

#include <map>
#include <string>
#include <vector>

namespace perhom {

inline double oscillation_beta(const EllipticOperator& op, const Vec& x, const Vec& x0,
                               const std::vector<Mat>& probes = {}) {
    if (op.kind() == EllipticOperator::Kind::Linear) {
        Mat d = op.branches()[0].eval(x) - op.branches()[0].eval(x0);
        return d.norm();  // Frobenius
    }
    if (op.x_independent()) return 0.0;
    if (probes.empty()) throw Error("oscillation_beta: probe set required for non-linear operator");
    double best = 0.0;
    for (const Mat& M : probes) {
        double nrm = M.norm();
        if (nrm <= 0) throw Error("oscillation_beta: zero probe matrix");
        best = std::max(best, std::abs(op(M, x) - op(M, x0)) / nrm);
    }
    return best;
}

inline std::vector<Mat> default_probes(int n, int count, std::uint64_t seed) {
    std::vector<Mat> ps;
    ps.push_back(Mat::Identity(n, n));
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            Mat E = Mat::Zero(n, n);
            E(i, j) = E(j, i) = 1.0;
            ps.push_back(E);
        }
    Rng rng(seed);
    while (static_cast<int>(ps.size()) < count) ps.push_back(rng.sym(n));
    return ps;
}

struct OscillationReport {
    bool exact = false;  // Frobenius dual (linear) vs probe lower bound
    Vec x0;
    std::vector<double> radii;
    std::vector<double> local_norms;     // ( avg_{Q_r(x0)} |beta|^n )^{1/n}
    std::vector<double> raw_integrals;   // integral (not average) of |beta|^n
    double holder_C = 0.0;               // fit local_norm ~ C r^alpha
    double holder_alpha = 0.0;
    bool holder_degenerate = false;
    std::map<std::string, double> extras;
};

/// Local L^n averages of beta over cubes Q_r(x0), r <= 2, by midpoint
/// quadrature with `quad_res` points per axis, plus the power-law fit of
/// norm against r (condition (1.3)-style smallness data).
inline OscillationReport oscillation_norms(const EllipticOperator& op, const Vec& x0,
                                           const std::vector<double>& radii, int quad_res = 64,
                                           const std::vector<Mat>& probes = {}) {
    const int n = op.dim();
    OscillationReport rep;
    rep.exact = (op.kind() == EllipticOperator::Kind::Linear) || op.x_independent();
    rep.x0 = x0;

    std::vector<Mat> pr = probes;
    if (!rep.exact && pr.empty()) pr = default_probes(n, 8, 12345);

    for (double r : radii) {
        if (!(r > 0)) throw Error("oscillation_norms: radii must be positive");
        // midpoint rule over Q_r(x0)
        std::vector<double> vals;
        vals.reserve(static_cast<std::size_t>(std::pow(quad_res, n)));
        std::vector<int> mi(n, 0);
        const std::size_t total = static_cast<std::size_t>(std::pow(quad_res, n));
        Vec x(n);
        for (std::size_t flat = 0; flat < total; ++flat) {
            std::size_t rem = flat;
            for (int d = n - 1; d >= 0; --d) {
                mi[d] = static_cast<int>(rem % quad_res);
                rem /= quad_res;
            }
            for (int d = 0; d < n; ++d)
                x(d) = x0(d) + r * (-0.5 + (mi[d] + 0.5) / quad_res);
            double b = oscillation_beta(op, x, x0, pr);
            vals.push_back(std::pow(std::abs(b), n));
        }
        double avg = kahan_mean(vals);
        rep.radii.push_back(r);
        rep.local_norms.push_back(std::pow(avg, 1.0 / n));
        rep.raw_integrals.push_back(avg * std::pow(r, n));
    }

    PowerFit pf = fit_power_law(rep.radii, rep.local_norms, 1e-300);
    rep.holder_degenerate = pf.degenerate;
    if (!pf.degenerate) {
        rep.holder_C = pf.prefactor;
        rep.holder_alpha = pf.exponent;
    }
    return rep;
}

}  // namespace perhom
