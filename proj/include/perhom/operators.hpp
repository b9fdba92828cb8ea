#pragma once

// Representations and point evaluation of F(M,x): linear non-divergence
// operators a_ij(x) M_ij, finite Bellman minima of linear operators, and
// Pucci extremal operators.  All variants are normalized to F(0,x) = 0 and
// periodic in x by construction.

#include "perhom/numerics.hpp"
#include "perhom/torus.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace perhom {

using CoeffFn = std::function<double(const Vec&)>;

/// Symmetric matrix-valued periodic coefficient field a(x), entries held as
/// callables so analytic presets evaluate exactly at arbitrary points.
struct CoeffMatrix {
    int n = 0;
    std::vector<CoeffFn> upper;  // packed i<=j, same order as SymMatField

    Mat eval(const Vec& x) const {
        Mat a(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j)
                a(i, j) = a(j, i) = upper[SymMatField::pack_index(n, i, j)](x);
        return a;
    }

    static CoeffMatrix constant(const Mat& a) {
        require_symmetric(a, "CoeffMatrix::constant");
        CoeffMatrix c;
        c.n = static_cast<int>(a.rows());
        for (int i = 0; i < c.n; ++i)
            for (int j = i; j < c.n; ++j) {
                double v = a(i, j);
                c.upper.push_back([v](const Vec&) { return v; });
            }
        return c;
    }

    static CoeffMatrix isotropic(int n, CoeffFn g) {
        CoeffMatrix c;
        c.n = n;
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                if (i == j)
                    c.upper.push_back(g);
                else
                    c.upper.push_back([](const Vec&) { return 0.0; });
            }
        return c;
    }

    /// Entries backed by sampled torus fields; lookup snaps to the nearest
    /// node (good to O(h) between nodes, exact on nodes).
    static CoeffMatrix from_fields(const std::vector<TorusField>& entries) {
        if (entries.empty()) throw ConfigError("CoeffMatrix::from_fields: no entries");
        int n = entries[0].grid.dim;
        if (static_cast<int>(entries.size()) != n * (n + 1) / 2)
            throw ConfigError("CoeffMatrix::from_fields: expected n(n+1)/2 entry fields");
        CoeffMatrix c;
        c.n = n;
        for (const TorusField& f : entries) {
            auto fld = std::make_shared<TorusField>(f);
            c.upper.push_back([fld](const Vec& x) { return fld->values[fld->grid.nearest_node(x)]; });
        }
        return c;
    }
};

enum class PucciSign { Plus, Minus };

/// Pucci extremal operators from the eigenvalues of M:
///   M+(M) = Lambda * sum_{k>0} k + lambda * sum_{k<0} k
///   M-(M) = lambda * sum_{k>0} k + Lambda * sum_{k<0} k
inline double eval_pucci(PucciSign sign, const Mat& M, double lambda, double Lambda) {
    if (lambda > Lambda) throw Error("eval_pucci: requires lambda <= Lambda");
    if (lambda <= 0) throw Error("eval_pucci: requires lambda > 0");
    require_symmetric(M, "eval_pucci");
    Vec ev = sym_eigenvalues(M);
    double s = 0;
    for (int i = 0; i < ev.size(); ++i) {
        double k = ev(i);
        if (sign == PucciSign::Plus)
            s += (k > 0 ? Lambda : lambda) * k;
        else
            s += (k > 0 ? lambda : Lambda) * k;
    }
    return s;
}

class EllipticOperator {
public:
    enum class Kind { Linear, Bellman, Pucci, Shifted };

    static EllipticOperator linear(CoeffMatrix a, double lambda, double Lambda,
                                   bool validate = true) {
        EllipticOperator op;
        op.kind_ = Kind::Linear;
        op.n_ = a.n;
        op.lambda_ = lambda;
        op.Lambda_ = Lambda;
        op.branches_.push_back(std::move(a));
        op.check_constants();
        if (validate) op.validate_branches();
        return op;
    }

    static EllipticOperator bellman(std::vector<CoeffMatrix> branches, double lambda,
                                    double Lambda, bool validate = true) {
        if (branches.empty()) throw ConfigError("bellman operator needs >= 1 branch");
        EllipticOperator op;
        op.kind_ = Kind::Bellman;
        op.n_ = branches[0].n;
        op.lambda_ = lambda;
        op.Lambda_ = Lambda;
        op.branches_ = std::move(branches);
        op.check_constants();
        if (validate) op.validate_branches();
        return op;
    }

    static EllipticOperator pucci(int n, PucciSign sign, double lambda, double Lambda) {
        EllipticOperator op;
        op.kind_ = Kind::Pucci;
        op.n_ = n;
        op.sign_ = sign;
        op.lambda_ = lambda;
        op.Lambda_ = Lambda;
        op.check_constants();
        return op;
    }

    static EllipticOperator shifted(EllipticOperator base, double offset) {
        EllipticOperator op = std::move(base);
        op.offset_ += offset;
        return op;
    }

    Kind kind() const { return kind_; }
    int dim() const { return n_; }
    double lambda() const { return lambda_; }
    double Lambda() const { return Lambda_; }
    double offset() const { return offset_; }
    PucciSign pucci_sign() const { return sign_; }
    const std::vector<CoeffMatrix>& branches() const { return branches_; }

    bool is_shifted() const { return offset_ != 0.0; }

    /// True when F(M,x) does not depend on x (Pucci, or constant coeffs
    /// declared via the flag at construction -- presets set it).
    bool x_independent() const { return kind_ == Kind::Pucci || x_independent_; }
    void mark_x_independent() { x_independent_ = true; }

    /// F(M,x).  Linear: tr(a(x) M); Bellman: min over branches; Pucci: the
    /// extremal formula.  Shift offsets add on top.
    double operator()(const Mat& M, const Vec& x) const {
        require_symmetric(M, "eval_operator");
        double v;
        if (kind_ == Kind::Pucci) {
            v = eval_pucci(sign_, M, lambda_, Lambda_);
        } else {
            v = branch_value(0, M, x);
            for (std::size_t b = 1; b < branches_.size(); ++b)
                v = std::min(v, branch_value(b, M, x));
        }
        return v + offset_;
    }

    double branch_value(std::size_t b, const Mat& M, const Vec& x) const {
        const Mat a = branches_[b].eval(x);
        return (a.array() * M.array()).sum();
    }

private:
    EllipticOperator() = default;

    void check_constants() const {
        if (!(lambda_ > 0) || !(Lambda_ >= lambda_))
            throw ConfigError("elliptic operator requires 0 < lambda <= Lambda");
    }

    /// Sample-based (H1) check for coefficient branches: eigenvalues of
    /// a(x) within [lambda, Lambda] at probe nodes.
    void validate_branches(int probe_res = 16) const {
        TorusGrid g(n_, probe_res);
        for (const CoeffMatrix& cm : branches_) {
            if (cm.n != n_) throw ConfigError("operator branches disagree on dimension");
            for (std::size_t i = 0; i < g.node_count(); ++i) {
                Mat a = cm.eval(g.node(i));
                if (!is_symmetric(a)) throw ConfigError("coefficient matrix not symmetric");
                Vec ev = sym_eigenvalues(a);
                if (ev.minCoeff() < lambda_ - 1e-9 || ev.maxCoeff() > Lambda_ + 1e-9)
                    throw ConfigError("coefficient eigenvalues violate declared [lambda,Lambda]");
            }
        }
    }

    Kind kind_ = Kind::Linear;
    int n_ = 0;
    double lambda_ = 1.0, Lambda_ = 1.0;
    double offset_ = 0.0;
    bool x_independent_ = false;
    PucciSign sign_ = PucciSign::Plus;
    std::vector<CoeffMatrix> branches_;
};

/// Randomized check of the Pucci sandwich
///   M-(N) <= F(M+N,x) - F(M,x) <= M+(N)   for N >= 0,
/// using the operator's declared constants.  Also probes N = tI, where
/// Pucci operators saturate the sandwich.
struct EllipticityReport {
    bool pass = true;
    int samples = 0;
    double worst_lower_margin = std::numeric_limits<double>::infinity();
    double worst_upper_margin = std::numeric_limits<double>::infinity();
    std::string witness;  // description of a violating (M,N,x), empty if pass
};

inline EllipticityReport check_uniform_ellipticity(const EllipticOperator& op, int samples,
                                                   std::uint64_t seed, double tol = 1e-9) {
    if (samples < 1) throw ConfigError("check_uniform_ellipticity: samples >= 1");
    EllipticityReport rep;
    rep.samples = samples;
    Rng rng(seed);
    const int n = op.dim();
    for (int s = 0; s < samples; ++s) {
        Mat M = rng.sym(n);
        Mat N;
        if (s % 8 == 0) {
            N = rng.uniform(0.1, 2.0) * Mat::Identity(n, n);
        } else {
            N = rng.psd(n);
        }
        Vec x = rng.point(n);
        double incr = op(M + N, x) - op(M, x);
        double lo = eval_pucci(PucciSign::Minus, N, op.lambda(), op.Lambda());
        double hi = eval_pucci(PucciSign::Plus, N, op.lambda(), op.Lambda());
        double ml = incr - lo;
        double mu = hi - incr;
        rep.worst_lower_margin = std::min(rep.worst_lower_margin, ml);
        rep.worst_upper_margin = std::min(rep.worst_upper_margin, mu);
        if (ml < -tol || mu < -tol) {
            rep.pass = false;
            if (rep.witness.empty()) {
                std::string w = "sample " + std::to_string(s) + ": x=(";
                for (int d = 0; d < n; ++d) w += format_double(x(d)) + (d + 1 < n ? "," : ")");
                w += " margin_lo=" + format_double(ml) + " margin_hi=" + format_double(mu);
                rep.witness = w;
            }
        }
    }
    return rep;
}

}  // namespace perhom
