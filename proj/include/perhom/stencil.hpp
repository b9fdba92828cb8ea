#pragma once

// Direction sets for wide-stencil monotone discretization.  A linear
// operator tr(a(x) D^2 u) is written as a nonnegative combination of
// directional second differences: sum_k w_k p_k p_k^T = a with w_k >= 0,
// which keeps every discrete equation degenerate elliptic.  Pucci
// operators use the orthogonal frames contained in the set.

#include "perhom/numerics.hpp"

#include <string>
#include <vector>

namespace perhom {

struct DirectionSet {
    int n = 0;
    std::string id;
    std::vector<Eigen::VectorXi> dirs;       // integer directions, up to sign
    std::vector<double> len2;                // |p|^2 per direction
    std::vector<std::vector<int>> frames;    // indices of n mutually orthogonal dirs
    // closed-form bookkeeping (-1 when absent)
    std::vector<int> axis_index;                       // axis e_i -> dir index
    std::vector<std::vector<int>> fd_plus, fd_minus;   // e_i + e_j / e_i - e_j

    int count() const { return static_cast<int>(dirs.size()); }

    int reach() const {
        int m = 0;
        for (const auto& p : dirs) m = std::max(m, p.cwiseAbs().maxCoeff());
        return m;
    }

    static DirectionSet make(int n, const std::string& id_in = "auto") {
        std::string id = id_in.empty() || id_in == "auto" ? (n == 1 ? "axes" : "wide") : id_in;
        DirectionSet D;
        D.n = n;
        D.id = id;
        auto push = [&](std::initializer_list<int> comps) {
            Eigen::VectorXi p(n);
            int d = 0;
            for (int c : comps) p(d++) = c;
            D.dirs.push_back(p);
        };
        // axes always present
        for (int i = 0; i < n; ++i) {
            Eigen::VectorXi p = Eigen::VectorXi::Zero(n);
            p(i) = 1;
            D.dirs.push_back(p);
        }
        if (id != "axes" && n >= 2) {
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j) {
                    Eigen::VectorXi p = Eigen::VectorXi::Zero(n);
                    p(i) = 1;
                    p(j) = 1;
                    D.dirs.push_back(p);
                    p(j) = -1;
                    D.dirs.push_back(p);
                }
        }
        if (id == "wide") {
            if (n == 2) {
                push({2, 1});
                push({1, 2});
                push({2, -1});
                push({1, -2});
            } else if (n == 3) {
                push({1, 1, 1});
                push({1, 1, -1});
                push({1, -1, 1});
                push({1, -1, -1});
            }
        } else if (id != "axes" && id != "fd") {
            throw ConfigError("unknown direction set id: " + id);
        }
        D.finalize();
        return D;
    }

    void finalize() {
        len2.clear();
        for (const auto& p : dirs) len2.push_back(p.cast<double>().squaredNorm());
        axis_index.assign(n, -1);
        fd_plus.assign(n, std::vector<int>(n, -1));
        fd_minus.assign(n, std::vector<int>(n, -1));
        for (int k = 0; k < count(); ++k) {
            const auto& p = dirs[k];
            int nz = 0, i0 = -1, i1 = -1;
            for (int d = 0; d < n; ++d)
                if (p(d) != 0) {
                    ++nz;
                    (i0 < 0 ? i0 : i1) = d;
                }
            if (nz == 1 && std::abs(p(i0)) == 1) axis_index[i0] = k;
            if (nz == 2 && std::abs(p(i0)) == 1 && std::abs(p(i1)) == 1) {
                if (p(i0) * p(i1) > 0)
                    fd_plus[i0][i1] = fd_plus[i1][i0] = k;
                else
                    fd_minus[i0][i1] = fd_minus[i1][i0] = k;
            }
        }
        // orthogonal frames (exhaustive over the small set)
        frames.clear();
        std::vector<int> pick;
        enumerate_frames(0, pick);
    }

private:
    void enumerate_frames(int start, std::vector<int>& pick) {
        if (static_cast<int>(pick.size()) == n) {
            frames.push_back(pick);
            return;
        }
        for (int k = start; k < count(); ++k) {
            bool ok = true;
            for (int j : pick)
                if (dirs[j].dot(dirs[k]) != 0) {
                    ok = false;
                    break;
                }
            if (ok) {
                pick.push_back(k);
                enumerate_frames(k + 1, pick);
                pick.pop_back();
            }
        }
    }
};

namespace detail {

/// Lawson-Hanson nonnegative least squares for the tiny systems arising in
/// cone decomposition (rows = packed symmetric entries, cols = directions).
inline bool nnls(const Mat& E, const Vec& f, Vec& w, double tol, int max_iter = 200) {
    const int k = static_cast<int>(E.cols());
    w = Vec::Zero(k);
    std::vector<bool> passive(k, false);
    Vec r = f;
    for (int it = 0; it < max_iter; ++it) {
        Vec g = E.transpose() * r;
        int best = -1;
        double best_g = tol;
        for (int i = 0; i < k; ++i)
            if (!passive[i] && g(i) > best_g) {
                best_g = g(i);
                best = i;
            }
        if (best < 0) break;
        passive[best] = true;
        // inner loop: restricted least squares, prune negatives
        for (;;) {
            std::vector<int> idx;
            for (int i = 0; i < k; ++i)
                if (passive[i]) idx.push_back(i);
            Mat Ep(E.rows(), idx.size());
            for (std::size_t c = 0; c < idx.size(); ++c) Ep.col(c) = E.col(idx[c]);
            Vec z = Ep.colPivHouseholderQr().solve(f);
            bool all_pos = true;
            for (int c = 0; c < z.size(); ++c)
                if (z(c) <= 0) all_pos = false;
            if (all_pos) {
                for (std::size_t c = 0; c < idx.size(); ++c) w(idx[c]) = z(c);
                break;
            }
            double alpha = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < idx.size(); ++c)
                if (z(c) <= 0) alpha = std::min(alpha, w(idx[c]) / (w(idx[c]) - z(c)));
            for (std::size_t c = 0; c < idx.size(); ++c) {
                w(idx[c]) += alpha * (z(c) - w(idx[c]));
                if (w(idx[c]) <= tol) {
                    w(idx[c]) = 0;
                    passive[idx[c]] = false;
                }
            }
        }
        r = f - E * w;
    }
    return r.norm() <= std::max(tol, 1e-12 * f.norm());
}

}  // namespace detail

/// Exact nonnegative decomposition a = sum_k w_k p_k p_k^T over the set.
/// The closed form (axes + face diagonals) applies when a is diagonally
/// dominant; otherwise an NNLS solve over the full set is attempted.
/// Returns false when a is not representable in the stencil cone.
inline bool decompose_spd(const Mat& a, const DirectionSet& D, std::vector<double>& w,
                          double tol = 1e-11) {
    const int n = D.n;
    w.assign(D.count(), 0.0);
    bool closed_ok = true;
    for (int i = 0; i < n && closed_ok; ++i) {
        double off = 0;
        for (int j = 0; j < n && closed_ok; ++j) {
            if (i == j) continue;
            double aij = a(i, j);
            off += std::abs(aij);
            if (i < j && std::abs(aij) > tol) {
                int k = aij > 0 ? D.fd_plus[i][j] : D.fd_minus[i][j];
                if (k < 0)
                    closed_ok = false;
                else
                    w[k] = std::abs(aij);
            }
        }
        if (!closed_ok) break;
        double wi = a(i, i) - off;
        if (wi < -tol) {
            closed_ok = false;
        } else {
            if (D.axis_index[i] < 0) {
                closed_ok = std::abs(wi) <= tol;
            } else {
                w[D.axis_index[i]] = std::max(wi, 0.0);
            }
        }
    }
    if (closed_ok) return true;

    // wide-set fallback
    const int m = n * (n + 1) / 2;
    Mat E(m, D.count());
    Vec f(m);
    int row = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j, ++row) {
            double s = (i == j) ? 1.0 : std::sqrt(2.0);  // isometric packing
            f(row) = s * a(i, j);
            for (int k = 0; k < D.count(); ++k)
                E(row, k) = s * D.dirs[k](i) * D.dirs[k](j);
        }
    Vec wv;
    if (!detail::nnls(E, f, wv, tol)) return false;
    for (int k = 0; k < D.count(); ++k) w[k] = wv(k);
    return true;
}

}  // namespace perhom
