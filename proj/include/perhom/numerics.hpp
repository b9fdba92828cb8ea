#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace perhom {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct SolverError : Error {
    using Error::Error;
};
// Violation of a checked mathematical property (solvability criterion,
// ellipticity sandwich, decomposition residual, ...).
struct PropertyError : Error {
    using Error::Error;
};

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kPi = 3.14159265358979323846;

/// Compensated (Kahan) sum; deterministic left-to-right order.
inline double kahan_sum(std::span<const double> xs) {
    double s = 0.0, c = 0.0;
    for (double x : xs) {
        double y = x - c;
        double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    return s;
}

inline double kahan_mean(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    return kahan_sum(xs) / static_cast<double>(xs.size());
}

/// FNV-1a over raw bytes; used for config/result fingerprints.
inline std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t seed = 0xcbf29ce484222325ull) {
    std::uint64_t h = seed;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s) {
    return fnv1a(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(s.data()), s.size()));
}

inline bool is_symmetric(const Mat& M, double tol = 1e-12) {
    if (M.rows() != M.cols()) return false;
    double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
    return (M - M.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

inline void require_symmetric(const Mat& M, const char* what) {
    if (!is_symmetric(M)) throw Error(std::string(what) + ": matrix argument is not symmetric");
}

inline Eigen::VectorXd sym_eigenvalues(const Mat& M) {
    Eigen::SelfAdjointEigenSolver<Mat> es(M, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

/// Least-squares slope/intercept of y against x.
struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw Error("fit_line: need >= 2 samples");
    const auto n = static_cast<double>(x.size());
    double mx = kahan_mean(x), my = kahan_mean(y);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 0.0) throw Error("fit_line: degenerate abscissae");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    (void)n;
    return f;
}

/// Power-law fit y ~ C * x^p via log-log least squares. Non-positive
/// samples are rejected; callers flag those cases as degenerate.
struct PowerFit {
    double exponent = 0.0;
    double prefactor = 0.0;
    bool degenerate = false;  // some y were ~0; no slope information
};

inline PowerFit fit_power_law(std::span<const double> x, std::span<const double> y, double floor = 0.0) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > 0.0 && y[i] > floor) {
            lx.push_back(std::log(x[i]));
            ly.push_back(std::log(y[i]));
        }
    }
    PowerFit pf;
    if (lx.size() < 2) {
        pf.degenerate = true;
        return pf;
    }
    LineFit lf = fit_line(lx, ly);
    pf.exponent = lf.slope;
    pf.prefactor = std::exp(lf.intercept);
    return pf;
}

/// Observed order from three successive refinements e(h), e(h/2), e(h/4),
/// via the differences d1 = |a1-a2|, d2 = |a2-a3|.  When the differences
/// sit at rounding level the order is unobservable and the sequence is
/// reported as converged-to-roundoff.
struct RefinementOrder {
    double order = 0.0;
    bool roundoff_limited = false;
    double d_coarse = 0.0;
    double d_fine = 0.0;
};

inline RefinementOrder refinement_order(double a_coarse, double a_mid, double a_fine, double scale = 1.0) {
    RefinementOrder r;
    r.d_coarse = std::abs(a_coarse - a_mid);
    r.d_fine = std::abs(a_mid - a_fine);
    const double eps = std::numeric_limits<double>::epsilon();
    const double floor = 64.0 * eps * std::max(1.0, scale);
    if (r.d_fine <= floor) {
        r.roundoff_limited = true;
        r.order = std::numeric_limits<double>::infinity();
        return r;
    }
    r.order = std::log2(r.d_coarse / r.d_fine);
    return r;
}

/// Deterministic RNG wrapper for sampling test matrices.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double uniform(double lo = 0.0, double hi = 1.0) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(eng_);
    }
    double gaussian(double sigma = 1.0) {
        std::normal_distribution<double> d(0.0, sigma);
        return d(eng_);
    }
    int uniform_int(int lo, int hi) {  // inclusive
        std::uniform_int_distribution<int> d(lo, hi);
        return d(eng_);
    }

    Mat sym(int n, double sigma = 1.0) {
        Mat M(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) M(i, j) = M(j, i) = gaussian(sigma);
        return M;
    }

    /// Random PSD matrix G G^T / n, entries of G gaussian.
    Mat psd(int n, double sigma = 1.0) {
        Mat G(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) G(i, j) = gaussian(sigma);
        return (G * G.transpose()) / static_cast<double>(n);
    }

    Vec point(int n, double lo = -0.5, double hi = 0.5) {
        Vec x(n);
        for (int i = 0; i < n; ++i) x(i) = uniform(lo, hi);
        return x;
    }

    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
};

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace perhom
