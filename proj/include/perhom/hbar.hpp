#pragma once

// The homogenized operator: A -> Fbar(A) = alpha from the cell problem
// (with the datum f bound at construction, since Fbar depends on f).
// Includes the linear-case closed form through the invariant measure m
// (the positive kernel of the discrete adjoint), randomized checks of
// ellipticity and concavity of Fbar, and the recession root Fbar(tI)=target.

#include "perhom/cell.hpp"

#include <map>
#include <mutex>
#include <shared_mutex>

namespace perhom {

class HbarEvaluator {
public:
    HbarEvaluator(EllipticOperator op, TorusField f, TorusGrid grid, SolverConfig cfg = {})
        : op_(std::move(op)), f_(std::move(f)), grid_(grid), cfg_(cfg) {
        if (!(f_.grid == grid_)) throw ConfigError("HbarEvaluator: datum grid mismatch");
    }

    const EllipticOperator& op() const { return op_; }
    const TorusField& datum() const { return f_; }
    const TorusGrid& grid() const { return grid_; }
    const SolverConfig& config() const { return cfg_; }

    /// Fbar(A); cache hits return bit-identical values.
    double operator()(const Mat& A) const { return solve(A).alpha; }

    const CellSolution& solve(const Mat& A) const {
        require_symmetric(A, "hbar");
        auto key = quantize(A);
        {
            std::shared_lock lock(mx_);
            auto it = cache_.find(key);
            if (it != cache_.end()) return it->second;
        }
        CellProblem pb(op_, A, f_, grid_);
        CellSolution sol = solve_cell(pb, cfg_);
        if (!sol.converged) throw SolverError("hbar: cell solve failed: " + sol.message);
        std::unique_lock lock(mx_);
        return cache_.emplace(std::move(key), std::move(sol)).first->second;
    }

    std::size_t cache_size() const {
        std::shared_lock lock(mx_);
        return cache_.size();
    }

private:
    // quantization step 1e-12 for cache keys
    std::vector<std::int64_t> quantize(const Mat& A) const {
        std::vector<std::int64_t> key;
        for (int i = 0; i < A.rows(); ++i)
            for (int j = i; j < A.cols(); ++j)
                key.push_back(static_cast<std::int64_t>(std::llround(A(i, j) * 1e12)));
        return key;
    }

    EllipticOperator op_;
    TorusField f_;
    TorusGrid grid_;
    SolverConfig cfg_;
    mutable std::map<std::vector<std::int64_t>, CellSolution> cache_;
    mutable std::shared_mutex mx_;
};

struct InvariantMeasure {
    TorusField m;
    double positivity_min = 0;
    double mean_value = 0;
    double kernel_residual = 0;   // ||L^T m||_inf after normalization
    double sigma2_estimate = 0;   // smallest non-kernel singular value estimate
};

namespace detail {

/// Assemble the forward matrix L of the linear scheme (no saddle column).
inline Eigen::SparseMatrix<double> assemble_linear_torus(const EllipticOperator& op,
                                                         const TorusGrid& g,
                                                         const DirectionSet& D) {
    if (op.kind() != EllipticOperator::Kind::Linear)
        throw ConfigError("invariant measure is defined for linear operators");
    TorusScheme S(op, Mat::Zero(g.dim, g.dim), g, D);
    const std::size_t N = g.node_count();
    const double ih2 = 1.0 / (g.spacing * g.spacing);
    std::vector<Eigen::Triplet<double>> trips;
    std::vector<double> w(S.ndir());
    double c;
    NodePolicy p0{};
    for (std::size_t i = 0; i < N; ++i) {
        S.policy_row(p0, i, w, c);
        double dsum = 0;
        for (int k = 0; k < S.ndir(); ++k) {
            if (w[k] == 0) continue;
            dsum += 2 * w[k] * ih2;
            trips.emplace_back(static_cast<int>(i), static_cast<int>(S.nbr(i, k, +1)), w[k] * ih2);
            trips.emplace_back(static_cast<int>(i), static_cast<int>(S.nbr(i, k, -1)), w[k] * ih2);
        }
        trips.emplace_back(static_cast<int>(i), static_cast<int>(i), -dsum);
    }
    Eigen::SparseMatrix<double> L(static_cast<int>(N), static_cast<int>(N));
    L.setFromTriplets(trips.begin(), trips.end());
    return L;
}

}  // namespace detail

/// Invariant measure of a linear operator: the one-dimensional kernel of
/// the exact transpose of the discrete forward matrix, by inverse iteration
/// with a tiny shift; normalized to mean 1, positivity reported.  Errors
/// out when the kernel is not numerically simple.
inline InvariantMeasure invariant_measure(const EllipticOperator& op, const TorusGrid& g,
                                          const std::string& dirset = "auto",
                                          double simple_threshold = 1e-6) {
    DirectionSet D = DirectionSet::make(g.dim, dirset);
    Eigen::SparseMatrix<double> L = detail::assemble_linear_torus(op, g, D);
    Eigen::SparseMatrix<double> LT = L.transpose();
    const auto N = LT.rows();

    const double shift = 1e-8;
    Eigen::SparseMatrix<double> Ish(N, N);
    Ish.setIdentity();
    Eigen::SparseMatrix<double> M = LT + shift * Ish;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(M);
    if (lu.info() != Eigen::Success) throw SolverError("invariant_measure: factorization failed");

    Vec y = Vec::Ones(N);
    for (int it = 0; it < 50; ++it) {
        Vec z = lu.solve(y);
        z /= z.norm();
        double resid = (LT * z).cwiseAbs().maxCoeff();
        y = z;
        if (resid < 1e-13 * (1 + z.cwiseAbs().maxCoeff())) break;
    }
    // sign convention and mean-1 normalization
    double s = y.sum();
    if (s < 0) y = -y;
    double mval = y.sum() / static_cast<double>(N);
    if (mval == 0) throw SolverError("invariant_measure: zero-mean kernel vector");
    y /= mval;

    // numerical simplicity: deflated inverse iteration estimates the
    // smallest non-kernel singular value
    Vec m_hat = y / y.norm();
    Rng rng(2718281828ull);
    Vec z(N);
    for (Eigen::Index i = 0; i < N; ++i) z(i) = rng.gaussian();
    double sigma2 = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 8; ++it) {
        z -= m_hat.dot(z) * m_hat;
        z /= z.norm();
        sigma2 = (LT * z).norm();
        z = lu.solve(z);
    }
    if (sigma2 < simple_threshold)
        throw SolverError("invariant_measure: non-simple kernel (sigma2 ~ " +
                          format_double(sigma2) + ")");

    InvariantMeasure im;
    im.m.grid = g;
    im.m.values.assign(y.data(), y.data() + N);
    im.positivity_min = *std::min_element(im.m.values.begin(), im.m.values.end());
    im.mean_value = mean(im.m);
    im.kernel_residual = (LT * y).cwiseAbs().maxCoeff();
    im.sigma2_estimate = sigma2;
    return im;
}

struct LinearFormulaResult {
    double value = 0;  // A_ij avg(a_ij m) - avg(f m) + avg(f)
    Mat Q;             // effective matrix avg(a m)
};

/// Explicit linear-case homogenization formula by quadrature against the
/// invariant measure.
inline LinearFormulaResult hbar_linear_formula(const EllipticOperator& op, const TorusField& f,
                                               const Mat& A, const InvariantMeasure& im) {
    if (op.kind() != EllipticOperator::Kind::Linear)
        throw ConfigError("hbar_linear_formula: linear operators only");
    require_symmetric(A, "hbar_linear_formula");
    const TorusGrid& g = im.m.grid;
    if (!(f.grid == g)) throw ConfigError("hbar_linear_formula: grid mismatch");
    const int n = g.dim;
    const std::size_t N = g.node_count();
    LinearFormulaResult out;
    out.Q = Mat::Zero(n, n);
    std::vector<double> fm(N), am(N);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            const CoeffFn& entry = op.branches()[0].upper[SymMatField::pack_index(n, i, j)];
            for (std::size_t k = 0; k < N; ++k) am[k] = entry(g.node(k)) * im.m.values[k];
            out.Q(i, j) = out.Q(j, i) = kahan_mean(am);
        }
    for (std::size_t k = 0; k < N; ++k) fm[k] = f.values[k] * im.m.values[k];
    out.value = (A.array() * out.Q.array()).sum() - kahan_mean(fm) + mean(f);
    return out;
}

struct HbarPropertyReport {
    bool pass = true;
    int samples = 0;
    double slack = 0;
    double worst_lower_margin = std::numeric_limits<double>::infinity();
    double worst_upper_margin = std::numeric_limits<double>::infinity();
    std::string witness;
};

/// Pucci sandwich for Fbar:  M-(N) - eps <= Fbar(M+N) - Fbar(M) <= M+(N) + eps
/// on random (M, N >= 0) pairs; eps is the reported discretization slack.
inline HbarPropertyReport check_hbar_ellipticity(const HbarEvaluator& hbar, int samples,
                                                 std::uint64_t seed, double slack = -1) {
    if (samples < 1) throw ConfigError("check_hbar_ellipticity: samples >= 1");
    HbarPropertyReport rep;
    rep.samples = samples;
    rep.slack = slack >= 0 ? slack : 1e-6 + 10 * hbar.config().tol;
    Rng rng(seed);
    const int n = hbar.op().dim();
    for (int s = 0; s < samples; ++s) {
        Mat M = rng.sym(n);
        Mat N = (s % 7 == 0) ? Mat(rng.uniform(0.0, 2.0) * Mat::Identity(n, n)) : rng.psd(n);
        double incr = hbar(M + N) - hbar(M);
        double lo = eval_pucci(PucciSign::Minus, N, hbar.op().lambda(), hbar.op().Lambda());
        double hi = eval_pucci(PucciSign::Plus, N, hbar.op().lambda(), hbar.op().Lambda());
        double ml = incr - lo, mu = hi - incr;
        rep.worst_lower_margin = std::min(rep.worst_lower_margin, ml);
        rep.worst_upper_margin = std::min(rep.worst_upper_margin, mu);
        if (ml < -rep.slack || mu < -rep.slack) {
            rep.pass = false;
            if (rep.witness.empty())
                rep.witness = "sample " + std::to_string(s) + ": margin_lo=" + format_double(ml) +
                              " margin_hi=" + format_double(mu);
        }
    }
    return rep;
}

/// Concavity of Fbar:  Fbar((M+N)/2) >= (Fbar(M)+Fbar(N))/2 - eps.
inline HbarPropertyReport check_hbar_concavity(const HbarEvaluator& hbar, int samples,
                                               std::uint64_t seed, double slack = -1) {
    if (samples < 1) throw ConfigError("check_hbar_concavity: samples >= 1");
    const auto kind = hbar.op().kind();
    if (kind == EllipticOperator::Kind::Pucci && hbar.op().pucci_sign() == PucciSign::Plus)
        throw ConfigError("check_hbar_concavity: operator is convex (Pucci+), not concave");
    HbarPropertyReport rep;
    rep.samples = samples;
    rep.slack = slack >= 0 ? slack : 1e-6 + 10 * hbar.config().tol;
    Rng rng(seed);
    const int n = hbar.op().dim();
    for (int s = 0; s < samples; ++s) {
        Mat M = rng.sym(n);
        Mat N = (s % 5 == 0) ? M : rng.sym(n);  // include the identity case M=N
        double mid = hbar((M + N) / 2);
        double avg = 0.5 * hbar(M) + 0.5 * hbar(N);
        double margin = mid - avg;
        rep.worst_lower_margin = std::min(rep.worst_lower_margin, margin);
        if (margin < -rep.slack) {
            rep.pass = false;
            if (rep.witness.empty())
                rep.witness =
                    "sample " + std::to_string(s) + ": concavity margin=" + format_double(margin);
        }
    }
    return rep;
}

struct RecessionRoot {
    double t = 0;
    double value = 0;  // Fbar(tI)
    int evaluations = 0;
};

/// Solves Fbar(tI) = target by bisection; t -> Fbar(tI) increases with
/// slope at least n*lambda, which drives the automatic bracket expansion.
inline RecessionRoot recession_root(const HbarEvaluator& hbar, double target, double t_lo = -1,
                                    double t_hi = 1, double tol = 1e-8, int max_expand = 60) {
    const int n = hbar.op().dim();
    const double slope_min = n * hbar.op().lambda();
    Mat I = Mat::Identity(n, n);
    RecessionRoot rr;
    auto F = [&](double t) {
        ++rr.evaluations;
        return hbar(t * I);
    };
    double f_lo = F(t_lo), f_hi = F(t_hi);
    int guard = 0;
    while (f_lo > target) {
        if (++guard > max_expand) throw SolverError("recession_root: bracket expansion exceeded");
        t_lo -= std::max(1.25 * (f_lo - target) / slope_min, 0.5);
        f_lo = F(t_lo);
    }
    while (f_hi < target) {
        if (++guard > max_expand) throw SolverError("recession_root: bracket expansion exceeded");
        t_hi += std::max(1.25 * (target - f_hi) / slope_min, 0.5);
        f_hi = F(t_hi);
    }
    double t_mid = 0.5 * (t_lo + t_hi), f_mid = 0;
    for (int it = 0; it < 200; ++it) {
        t_mid = 0.5 * (t_lo + t_hi);
        f_mid = F(t_mid);
        if (std::abs(f_mid - target) <= tol) break;
        if (f_mid < target)
            t_lo = t_mid;
        else
            t_hi = t_mid;
        if (t_hi - t_lo < 1e-15 * std::max(1.0, std::abs(t_mid))) break;
    }
    rr.t = t_mid;
    rr.value = f_mid;
    if (std::abs(f_mid - target) > tol)
        throw SolverError("recession_root: bisection failed to reach tolerance");
    return rr;
}

}  // namespace perhom
