#pragma once

// Uniform periodic grids on the unit cell Q1 = [-1/2,1/2]^n, node-sampled
// fields, periodic difference quotients and cell averages.  Nodes sit at
// cell centers, x_i = -1/2 + (i+1/2) h, so the plain node average is the
// midpoint rule, which is spectrally accurate for smooth periodic data.

#include "perhom/numerics.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <utility>

namespace perhom {

struct TorusGrid {
    int dim = 0;
    int res = 0;        // points per axis
    double spacing = 0; // 1/res

    TorusGrid() = default;
    TorusGrid(int n, int r) : dim(n), res(r), spacing(1.0 / r) {
        if (n < 1) throw ConfigError("TorusGrid: dim must be >= 1");
        if (r < 4) throw ConfigError("TorusGrid: res must be >= 4");
    }

    std::size_t node_count() const {
        std::size_t c = 1;
        for (int d = 0; d < dim; ++d) c *= static_cast<std::size_t>(res);
        return c;
    }

    int wrap(long long i) const {
        long long r = i % res;
        return static_cast<int>(r < 0 ? r + res : r);
    }

    std::size_t index(std::span<const int> mi) const {
        std::size_t idx = 0;
        for (int d = 0; d < dim; ++d) idx = idx * res + static_cast<std::size_t>(wrap(mi[d]));
        return idx;
    }

    void multi_index(std::size_t idx, std::span<int> mi) const {
        for (int d = dim - 1; d >= 0; --d) {
            mi[d] = static_cast<int>(idx % res);
            idx /= res;
        }
    }

    double coord(int i) const { return -0.5 + (i + 0.5) * spacing; }

    Vec node(std::size_t idx) const {
        Vec x(dim);
        std::array<int, 8> mi{};
        multi_index(idx, std::span<int>(mi.data(), dim));
        for (int d = 0; d < dim; ++d) x(d) = coord(mi[d]);
        return x;
    }

    /// Nearest node to an arbitrary point (periodic wrap).
    std::size_t nearest_node(const Vec& x) const {
        std::array<int, 8> mi{};
        for (int d = 0; d < dim; ++d) {
            double t = (x(d) + 0.5) / spacing - 0.5;  // fractional node index
            mi[d] = wrap(static_cast<long long>(std::llround(t)));
        }
        return index(std::span<const int>(mi.data(), dim));
    }

    bool operator==(const TorusGrid& o) const { return dim == o.dim && res == o.res; }
};

struct LatticeVector {
    std::vector<int> k;

    explicit LatticeVector(std::vector<int> comps) : k(std::move(comps)) {}
    LatticeVector(std::initializer_list<int> comps) : k(comps) {}

    bool zero() const {
        return std::all_of(k.begin(), k.end(), [](int c) { return c == 0; });
    }
    double norm2() const {
        double s = 0;
        for (int c : k) s += double(c) * c;
        return s;
    }
    int dim() const { return static_cast<int>(k.size()); }
};

struct TorusField {
    TorusGrid grid;
    std::vector<double> values;
    bool zero_mean = false;

    TorusField() = default;
    explicit TorusField(const TorusGrid& g, double fill = 0.0)
        : grid(g), values(g.node_count(), fill) {}

    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    static TorusField sample(const TorusGrid& g, const std::function<double(const Vec&)>& fn) {
        TorusField f(g);
        for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = fn(g.node(i));
        return f;
    }

    double max_abs() const {
        double m = 0;
        for (double v : values) m = std::max(m, std::abs(v));
        return m;
    }
};

inline double mean(const TorusField& f) { return kahan_mean(f.values); }

inline TorusField project_zero_mean(const TorusField& f) {
    TorusField out = f;
    const double m = mean(f);
    for (double& v : out.values) v -= m;
    out.zero_mean = true;
    return out;
}

/// Checks the zero-mean membership invariant for the space of periodic
/// zero-average functions.
inline bool check_zero_mean(const TorusField& f, double tol = 1e-12) {
    return std::abs(mean(f)) <= tol * std::max(1.0, f.max_abs());
}

enum class DiffMode {
    WholePeriods,  // e in whole periods of the unit cell; offset = e * res nodes
    NodeOffset,    // e in node units; physical length = |e| * spacing
};

/// Second order difference quotient (u(x+e) + u(x-e) - 2u(x)) / |e|^2 with
/// periodic wraparound.  In WholePeriods mode the shift is an exact lattice
/// translation, so the result vanishes identically for periodic fields.
inline TorusField second_difference(const TorusField& f, const LatticeVector& e, DiffMode mode) {
    if (e.zero()) throw Error("second_difference: degenerate direction");
    if (e.dim() != f.grid.dim) throw Error("second_difference: direction dimension mismatch");
    const TorusGrid& g = f.grid;
    std::vector<int> off(g.dim);
    double len2 = 0;
    if (mode == DiffMode::WholePeriods) {
        for (int d = 0; d < g.dim; ++d) off[d] = e.k[d] * g.res;
        len2 = e.norm2();  // periods have unit length
    } else {
        for (int d = 0; d < g.dim; ++d) off[d] = e.k[d];
        len2 = e.norm2() * g.spacing * g.spacing;
    }
    TorusField out(g);
    std::vector<int> mi(g.dim), mp(g.dim), mm(g.dim);
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        g.multi_index(i, mi);
        for (int d = 0; d < g.dim; ++d) {
            mp[d] = mi[d] + off[d];
            mm[d] = mi[d] - off[d];
        }
        out.values[i] = (f.values[g.index(mp)] + f.values[g.index(mm)] - 2.0 * f.values[i]) / len2;
    }
    return out;
}

/// Symmetric-matrix-valued field stored as the packed upper triangle.
struct SymMatField {
    TorusGrid grid;
    int n = 0;
    std::vector<double> packed;  // node-major, then (i<=j) lexicographic

    static int pack_index(int n, int i, int j) {
        if (i > j) std::swap(i, j);
        return i * n - i * (i - 1) / 2 + (j - i);
    }
    int entries() const { return n * (n + 1) / 2; }
    double at(std::size_t node, int i, int j) const {
        return packed[node * entries() + pack_index(n, i, j)];
    }
    Mat matrix(std::size_t node) const {
        Mat M(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) M(i, j) = M(j, i) = at(node, i, j);
        return M;
    }
};

/// Discrete Hessian by central second differences: axis entries from the
/// axis quotients, off-diagonal entries from the two diagonal quotients
/// (u_{+e_i+e_j} type), exact on sampled quadratics.  All offsets are in
/// node units; offsets at or beyond res/2 alias under periodic wrap.
inline SymMatField discrete_hessian(const TorusField& f, int offset_nodes = 1) {
    const TorusGrid& g = f.grid;
    if (offset_nodes < 1) throw Error("discrete_hessian: offset must be >= 1");
    if (2 * offset_nodes >= g.res) throw Error("discrete_hessian: stencil too wide");
    SymMatField H;
    H.grid = g;
    H.n = g.dim;
    H.packed.assign(g.node_count() * H.entries(), 0.0);
    const double h2 = std::pow(offset_nodes * g.spacing, 2);

    std::vector<int> mi(g.dim), ma(g.dim), mb(g.dim);
    for (std::size_t node = 0; node < g.node_count(); ++node) {
        g.multi_index(node, mi);
        for (int i = 0; i < g.dim; ++i) {
            ma = mi;
            mb = mi;
            ma[i] += offset_nodes;
            mb[i] -= offset_nodes;
            double dii = (f.values[g.index(ma)] + f.values[g.index(mb)] - 2 * f.values[node]) / h2;
            H.packed[node * H.entries() + SymMatField::pack_index(g.dim, i, i)] = dii;
        }
        for (int i = 0; i < g.dim; ++i) {
            for (int j = i + 1; j < g.dim; ++j) {
                // d2/d(e_i+e_j)^2 - d2/d(e_i-e_j)^2 = 4 D_ij (unnormalized quotients)
                ma = mi;
                ma[i] += offset_nodes;
                ma[j] += offset_nodes;
                mb = mi;
                mb[i] -= offset_nodes;
                mb[j] -= offset_nodes;
                double plus = f.values[g.index(ma)] + f.values[g.index(mb)] - 2 * f.values[node];
                ma = mi;
                ma[i] += offset_nodes;
                ma[j] -= offset_nodes;
                mb = mi;
                mb[i] -= offset_nodes;
                mb[j] += offset_nodes;
                double minus = f.values[g.index(ma)] + f.values[g.index(mb)] - 2 * f.values[node];
                double dij = (plus - minus) / (4.0 * h2);
                H.packed[node * H.entries() + SymMatField::pack_index(g.dim, i, j)] = dij;
            }
        }
    }
    return H;
}

// --- serialization -------------------------------------------------------
//
// Binary layout (.pfld, little-endian):
//   magic "PHF1" | u32 dim | u32 res | f64 * res^dim values, row-major
// CSV layout: first line "dim,res", then one value per line, row-major.

inline void save_field_binary(const TorusField& f, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open for write: " + path);
    os.write("PHF1", 4);
    std::uint32_t dim = f.grid.dim, res = f.grid.res;
    os.write(reinterpret_cast<const char*>(&dim), 4);
    os.write(reinterpret_cast<const char*>(&res), 4);
    os.write(reinterpret_cast<const char*>(f.values.data()),
             static_cast<std::streamsize>(f.values.size() * sizeof(double)));
}

inline TorusField load_field_binary(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open field file: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "PHF1", 4) != 0) throw ConfigError("bad field magic in " + path);
    std::uint32_t dim = 0, res = 0;
    is.read(reinterpret_cast<char*>(&dim), 4);
    is.read(reinterpret_cast<char*>(&res), 4);
    TorusField f(TorusGrid(static_cast<int>(dim), static_cast<int>(res)));
    is.read(reinterpret_cast<char*>(f.values.data()),
            static_cast<std::streamsize>(f.values.size() * sizeof(double)));
    if (!is) throw ConfigError("truncated field file: " + path);
    return f;
}

inline void save_field_csv(const TorusField& f, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open for write: " + path);
    os << f.grid.dim << "," << f.grid.res << "\n";
    for (double v : f.values) os << format_double(v) << "\n";
}

inline TorusField load_field_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open field file: " + path);
    int dim = 0, res = 0;
    char comma = 0;
    is >> dim >> comma >> res;
    if (!is || comma != ',') throw ConfigError("bad CSV field header in " + path);
    TorusField f(TorusGrid(dim, res));
    for (double& v : f.values) {
        if (!(is >> v)) throw ConfigError("truncated CSV field file: " + path);
    }
    return f;
}

inline TorusField load_field(const std::string& path) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") return load_field_csv(path);
    return load_field_binary(path);
}

}  // namespace perhom
