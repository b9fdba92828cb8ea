#pragma once

// Cell-centered Cartesian lattices with an active-node mask, used for
// Dirichlet problems on boxes Q_{2R} and on annuli B_R \ B_r.  Nodes sit at
// lo + (i+1/2) h; with h = 1/res_per_cell this lattice is congruent to the
// torus lattice modulo the unit cell, so periodic fields extend exactly.
// Inactive nodes inside the stencil reach carry Dirichlet closure values,
// folded into the right-hand side.

#include "perhom/numerics.hpp"
#include "perhom/stencil.hpp"
#include "perhom/torus.hpp"

#include <Eigen/Sparse>

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace perhom {

class Lattice {
public:
    int n = 0;
    double h = 0;
    Vec lo;                         // lower corner of bounding lattice
    std::vector<int> dims;          // bounding extent per axis (includes pad)
    std::vector<std::int64_t> strides;
    std::vector<std::int32_t> idx;  // bounding lin -> active compact index, -1 otherwise
    std::vector<std::int64_t> active_lin;  // compact -> bounding lin

    std::int64_t bounding_count() const {
        std::int64_t c = 1;
        for (int d : dims) c *= d;
        return c;
    }
    std::size_t active_count() const { return active_lin.size(); }

    Vec node_of_lin(std::int64_t lin) const {
        Vec x(n);
        for (int d = n - 1; d >= 0; --d) {
            x(d) = lo(d) + (static_cast<double>(lin % dims[d]) + 0.5) * h;
            lin /= dims[d];
        }
        return x;
    }

    std::int64_t lin_of_multi(std::span<const int> mi) const {
        std::int64_t l = 0;
        for (int d = 0; d < n; ++d) l = l * dims[d] + mi[d];
        return l;
    }

    /// Compact index of the node nearest to x, or -1 if inactive/out of range.
    std::int32_t compact_at(const Vec& x) const {
        std::int64_t l = 0;
        for (int d = 0; d < n; ++d) {
            auto i = static_cast<std::int64_t>(std::llround((x(d) - lo(d)) / h - 0.5));
            if (i < 0 || i >= dims[d]) return -1;
            l = l * dims[d] + i;
        }
        return idx[static_cast<std::size_t>(l)];
    }

    void build_strides() {
        strides.assign(n, 1);
        for (int d = n - 2; d >= 0; --d) strides[d] = strides[d + 1] * dims[d + 1];
    }

    /// Bounding index of the node offset by a (possibly multi-period)
    /// integer vector, with per-axis bounds checking; -1 when the offset
    /// leaves the bounding lattice.  Plain stride arithmetic would wrap
    /// silently across rows.
    std::int64_t offset_lin(std::int64_t lin, std::span<const int> off_nodes) const {
        std::array<int, 8> mi{};
        std::int64_t rem = lin;
        for (int d = n - 1; d >= 0; --d) {
            mi[d] = static_cast<int>(rem % dims[d]);
            rem /= dims[d];
        }
        std::int64_t out = 0;
        for (int d = 0; d < n; ++d) {
            int v = mi[d] + off_nodes[d];
            if (v < 0 || v >= dims[d]) return -1;
            out = out * dims[d] + v;
        }
        return out;
    }

    /// Box lattice: active nodes fill (-R,R)^n, pad ghost layers outside.
    static Lattice box(int n, double R, double h, int pad) {
        Lattice L;
        L.n = n;
        L.h = h;
        int interior = static_cast<int>(std::llround(2.0 * R / h));
        if (std::abs(interior * h - 2.0 * R) > 1e-12) throw ConfigError("Lattice::box: 2R must be a multiple of h");
        L.dims.assign(n, interior + 2 * pad);
        L.lo = Vec::Constant(n, -R - pad * h);
        L.build_strides();
        L.idx.assign(static_cast<std::size_t>(L.bounding_count()), -1);
        std::vector<int> mi(n, 0);
        for (std::int64_t lin = 0; lin < L.bounding_count(); ++lin) {
            std::int64_t rem = lin;
            bool interior_node = true;
            for (int d = n - 1; d >= 0; --d) {
                int i = static_cast<int>(rem % L.dims[d]);
                rem /= L.dims[d];
                if (i < pad || i >= pad + interior) interior_node = false;
            }
            if (interior_node) {
                L.idx[static_cast<std::size_t>(lin)] = static_cast<std::int32_t>(L.active_lin.size());
                L.active_lin.push_back(lin);
            }
        }
        return L;
    }

    /// Annulus lattice: active nodes with r_in <= |x| <= R_out.
    static Lattice annulus(int n, double r_in, double R_out, double h, int pad) {
        Lattice L;
        L.n = n;
        L.h = h;
        int half = static_cast<int>(std::ceil(R_out / h)) + pad;
        L.dims.assign(n, 2 * half);
        L.lo = Vec::Constant(n, -half * h);
        L.build_strides();
        L.idx.assign(static_cast<std::size_t>(L.bounding_count()), -1);
        for (std::int64_t lin = 0; lin < L.bounding_count(); ++lin) {
            double r2 = 0;
            std::int64_t rem = lin;
            for (int d = n - 1; d >= 0; --d) {
                double x = L.lo(d) + (static_cast<double>(rem % L.dims[d]) + 0.5) * h;
                rem /= L.dims[d];
                r2 += x * x;
            }
            double r = std::sqrt(r2);
            if (r >= r_in && r <= R_out) {
                L.idx[static_cast<std::size_t>(lin)] = static_cast<std::int32_t>(L.active_lin.size());
                L.active_lin.push_back(lin);
            }
        }
        return L;
    }
};

/// Field over the active nodes of a lattice.
struct LatticeField {
    std::shared_ptr<const Lattice> lat;
    std::vector<double> u;  // compact, over active nodes

    double at_compact(std::size_t i) const { return u[i]; }

    /// Value at the node nearest to x; throws if x maps to an inactive node.
    double at(const Vec& x) const {
        std::int32_t c = lat->compact_at(x);
        if (c < 0) throw Error("LatticeField::at: point not in the active region");
        return u[static_cast<std::size_t>(c)];
    }
    bool has(const Vec& x) const { return lat->compact_at(x) >= 0; }
};

/// Assembled monotone-stencil Dirichlet problem in M-matrix form A u = b:
///   A_ii = 2/h^2 sum_k w_ik,  A_{i,j} = -w_ik/h^2 for stencil neighbors j,
///   b_i  = c_i - f_i + closure contributions from inactive neighbors,
/// which is the equation c_i + sum_k w_ik D2_k u - f_i = 0 rearranged.
class StencilProblem {
public:
    const Lattice* lat = nullptr;
    double h = 0;
    std::vector<Eigen::VectorXi> dirs;
    std::vector<std::int64_t> dstride;
    std::vector<double> w;     // active_count * ndir
    std::vector<double> diag;  // A_ii
    std::vector<double> rhs;   // b

    int ndir() const { return static_cast<int>(dirs.size()); }

    void init(const Lattice& L, const std::vector<Eigen::VectorXi>& directions) {
        lat = &L;
        h = L.h;
        dirs = directions;
        dstride.clear();
        for (const auto& p : dirs) {
            std::int64_t s = 0;
            for (int d = 0; d < L.n; ++d) s += static_cast<std::int64_t>(p(d)) * L.strides[d];
            dstride.push_back(s);
        }
        w.assign(L.active_count() * dirs.size(), 0.0);
        diag.assign(L.active_count(), 0.0);
        rhs.assign(L.active_count(), 0.0);
    }

    /// Finish assembly: fold Dirichlet closures into rhs and cache diagonals.
    /// `closure(x)` must be defined at every inactive node within reach.
    void finalize(const std::function<double(const Vec&)>& closure) {
        const double ih2 = 1.0 / (h * h);
        const int nd = ndir();
        for (std::size_t i = 0; i < lat->active_count(); ++i) {
            std::int64_t lin = lat->active_lin[i];
            double dsum = 0;
            for (int k = 0; k < nd; ++k) {
                double wk = w[i * nd + k];
                if (wk == 0) continue;
                dsum += 2.0 * wk * ih2;
                for (int sgn : {+1, -1}) {
                    std::int64_t nl = lin + sgn * dstride[k];
                    if (lat->idx[static_cast<std::size_t>(nl)] < 0) {
                        Vec xn = lat->node_of_lin(nl);
                        rhs[i] += wk * ih2 * closure(xn);
                    }
                }
            }
            diag[i] = dsum;
        }
    }

    /// out = A u (matrix-free).
    void apply(const double* u, double* out) const {
        const double ih2 = 1.0 / (h * h);
        const int nd = ndir();
        const std::int32_t* ix = lat->idx.data();
        for (std::size_t i = 0; i < lat->active_count(); ++i) {
            std::int64_t lin = lat->active_lin[i];
            double acc = diag[i] * u[i];
            for (int k = 0; k < nd; ++k) {
                double wk = w[i * nd + k];
                if (wk == 0) continue;
                std::int32_t p = ix[lin + dstride[k]];
                std::int32_t m = ix[lin - dstride[k]];
                double nb = 0;
                if (p >= 0) nb += u[p];
                if (m >= 0) nb += u[m];
                acc -= wk * ih2 * nb;
            }
            out[i] = acc;
        }
    }

    /// z = M^{-1} r with M the SSOR splitting (one forward + one backward
    /// Gauss-Seidel sweep, zero initial guess).  Deterministic order.
    void ssor_apply(const double* r, double* z) const {
        const double ih2 = 1.0 / (h * h);
        const int nd = ndir();
        const std::int32_t* ix = lat->idx.data();
        const std::size_t N = lat->active_count();
        for (std::size_t i = 0; i < N; ++i) {
            double acc = r[i];
            std::int64_t lin = lat->active_lin[i];
            for (int k = 0; k < nd; ++k) {
                double wk = w[i * nd + k];
                if (wk == 0) continue;
                std::int32_t p = ix[lin + dstride[k]];
                std::int32_t m = ix[lin - dstride[k]];
                if (p >= 0 && static_cast<std::size_t>(p) < i) acc += wk * ih2 * z[p];
                if (m >= 0 && static_cast<std::size_t>(m) < i) acc += wk * ih2 * z[m];
            }
            z[i] = acc / diag[i];
        }
        for (std::size_t ri = N; ri-- > 0;) {
            double acc = 0;
            std::int64_t lin = lat->active_lin[ri];
            for (int k = 0; k < nd; ++k) {
                double wk = w[ri * nd + k];
                if (wk == 0) continue;
                std::int32_t p = ix[lin + dstride[k]];
                std::int32_t m = ix[lin - dstride[k]];
                if (p >= 0 && static_cast<std::size_t>(p) > ri) acc += wk * ih2 * z[p];
                if (m >= 0 && static_cast<std::size_t>(m) > ri) acc += wk * ih2 * z[m];
            }
            z[ri] += acc / diag[ri];
        }
    }

    Eigen::SparseMatrix<double> assemble_sparse() const {
        const double ih2 = 1.0 / (h * h);
        const int nd = ndir();
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(lat->active_count() * (2 * nd + 1));
        for (std::size_t i = 0; i < lat->active_count(); ++i) {
            std::int64_t lin = lat->active_lin[i];
            trips.emplace_back(static_cast<int>(i), static_cast<int>(i), diag[i]);
            for (int k = 0; k < nd; ++k) {
                double wk = w[i * nd + k];
                if (wk == 0) continue;
                for (int sgn : {+1, -1}) {
                    std::int32_t nb = lat->idx[static_cast<std::size_t>(lin + sgn * dstride[k])];
                    if (nb >= 0) trips.emplace_back(static_cast<int>(i), nb, -wk * ih2);
                }
            }
        }
        Eigen::SparseMatrix<double> A(static_cast<int>(lat->active_count()),
                                      static_cast<int>(lat->active_count()));
        A.setFromTriplets(trips.begin(), trips.end());
        return A;
    }
};

struct KrylovResult {
    int iterations = 0;
    double rel_residual = 0;
    bool converged = false;
};

/// Preconditioned BiCGSTAB on the stencil operator, SSOR preconditioner.
inline KrylovResult bicgstab(const StencilProblem& P, std::vector<double>& x, double rel_tol,
                             int max_iter) {
    const std::size_t N = P.lat->active_count();
    const std::vector<double>& b = P.rhs;
    std::vector<double> r(N), r0(N), p(N), v(N), s(N), t(N), ph(N), sh(N);
    if (x.size() != N) x.assign(N, 0.0);
    P.apply(x.data(), r.data());
    double bnorm = 0;
    for (std::size_t i = 0; i < N; ++i) {
        r[i] = b[i] - r[i];
        bnorm += b[i] * b[i];
    }
    bnorm = std::sqrt(bnorm);
    if (bnorm == 0) bnorm = 1;
    r0 = r;
    double rho = 1, alpha = 1, omega = 1;
    std::fill(p.begin(), p.end(), 0.0);
    std::fill(v.begin(), v.end(), 0.0);
    KrylovResult res;
    auto nrm = [&](const std::vector<double>& z) {
        double s2 = 0;
        for (double e : z) s2 += e * e;
        return std::sqrt(s2);
    };
    double rnorm = nrm(r);
    for (int it = 0; it < max_iter; ++it) {
        if (rnorm / bnorm <= rel_tol) {
            res.converged = true;
            break;
        }
        double rho1 = 0;
        for (std::size_t i = 0; i < N; ++i) rho1 += r0[i] * r[i];
        if (rho1 == 0) break;
        if (it == 0) {
            p = r;
        } else {
            double beta = (rho1 / rho) * (alpha / omega);
            for (std::size_t i = 0; i < N; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        rho = rho1;
        P.ssor_apply(p.data(), ph.data());
        P.apply(ph.data(), v.data());
        double r0v = 0;
        for (std::size_t i = 0; i < N; ++i) r0v += r0[i] * v[i];
        if (r0v == 0) break;
        alpha = rho / r0v;
        for (std::size_t i = 0; i < N; ++i) s[i] = r[i] - alpha * v[i];
        if (nrm(s) / bnorm <= rel_tol) {
            for (std::size_t i = 0; i < N; ++i) x[i] += alpha * ph[i];
            P.apply(x.data(), r.data());
            for (std::size_t i = 0; i < N; ++i) r[i] = b[i] - r[i];
            rnorm = nrm(r);
            res.iterations = it + 1;
            res.converged = rnorm / bnorm <= 10 * rel_tol;
            break;
        }
        P.ssor_apply(s.data(), sh.data());
        P.apply(sh.data(), t.data());
        double ts = 0, tt = 0;
        for (std::size_t i = 0; i < N; ++i) {
            ts += t[i] * s[i];
            tt += t[i] * t[i];
        }
        if (tt == 0) break;
        omega = ts / tt;
        for (std::size_t i = 0; i < N; ++i) {
            x[i] += alpha * ph[i] + omega * sh[i];
            r[i] = s[i] - omega * t[i];
        }
        rnorm = nrm(r);
        res.iterations = it + 1;
    }
    res.rel_residual = rnorm / bnorm;
    if (rnorm / bnorm <= rel_tol) res.converged = true;
    return res;
}

/// Direct sparse solve of the assembled problem (small/medium lattices).
inline void sparse_lu_solve(const StencilProblem& P, std::vector<double>& x) {
    Eigen::SparseMatrix<double> A = P.assemble_sparse();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) throw SolverError("sparse LU factorization failed");
    Eigen::Map<const Vec> b(P.rhs.data(), static_cast<Eigen::Index>(P.rhs.size()));
    Vec sol = lu.solve(b);
    x.assign(sol.data(), sol.data() + sol.size());
}

}  // namespace perhom
