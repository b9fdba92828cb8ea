#include "perhom/cell.hpp"
#include "perhom/presets.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace perhom;
using Catch::Approx;

namespace {
const double kSqrt3 = 1.7320508075688772;  // harmonic mean of 2 + sin(2 pi x)

CellSolution solve_osc1d(int res) {
    TorusGrid g(1, res);
    CellProblem pb(make_operator("osc1d"), Mat::Identity(1, 1), TorusField(g), g);
    return solve_cell(pb, SolverConfig{});
}
}  // namespace

TEST_CASE("constant coefficients: corrector vanishes and alpha = tr(A)") {
    Rng rng(101);
    for (int n : {2, 3}) {
        TorusGrid g(n, 8);
        auto op = make_operator("laplace", n);
        for (int s = 0; s < 3; ++s) {
            Mat A = rng.sym(n);
            CellProblem pb(op, A, TorusField(g), g);
            CellSolution sol = solve_cell(pb, SolverConfig{});
            REQUIRE(sol.converged);
            REQUIRE(sol.v.max_abs() <= 1e-10);
            REQUIRE(sol.alpha == Approx(A.trace()).margin(1e-10));
        }
    }
}

TEST_CASE("1-D oscillatory cell problem hits the harmonic mean") {
    // oracle: alpha = 1 / avg(1/a) with a = 2 + sin(2 pi x); quadrature gives 1/sqrt(3)
    double inv_mean = oracles::simpson(
        [](double x) { return 1.0 / (2.0 + std::sin(2 * kPi * x)); }, 0.0, 1.0);
    REQUIRE(1.0 / inv_mean == Approx(kSqrt3).margin(1e-10));

    auto s256 = solve_osc1d(256);
    REQUIRE(s256.converged);
    REQUIRE(std::abs(s256.alpha - kSqrt3) <= 1e-4);

    // the augmented solve reproduces the discrete harmonic mean exactly, so
    // successive refinements differ only at rounding level
    auto s64 = solve_osc1d(64);
    auto s128 = solve_osc1d(128);
    RefinementOrder ord = refinement_order(s64.alpha, s128.alpha, s256.alpha, kSqrt3);
    REQUIRE((ord.roundoff_limited || ord.order >= 1.8));
}

TEST_CASE("2-D anisotropic family has second-order ergodic constants") {
    auto op = make_operator("osc2d_aniso");
    Mat A(2, 2);
    A << 1.0, 0.0, 0.0, -0.5;
    auto alpha_at = [&](int res) {
        TorusGrid g(2, res);
        CellProblem pb(op, A, make_datum("cos2", g), g);
        CellSolution s = solve_cell(pb, SolverConfig{});
        REQUIRE(s.converged);
        return s.alpha;
    };
    double a16 = alpha_at(16), a32 = alpha_at(32), a64 = alpha_at(64);
    RefinementOrder ord = refinement_order(a16, a32, a64);
    REQUIRE_FALSE(ord.roundoff_limited);
    REQUIRE(ord.order >= 1.8);
}

TEST_CASE("x-independent Pucci: corrector vanishes, alpha is the Pucci value") {
    TorusGrid g(2, 16);
    auto op = make_operator("pucci_plus(lambda=1,Lambda=2)", 2);
    CellProblem pb(op, Mat::Identity(2, 2), TorusField(g), g);
    CellSolution sol = solve_cell(pb, SolverConfig{});
    REQUIRE(sol.converged);
    REQUIRE(sol.v.max_abs() <= 1e-12);
    REQUIRE(sol.alpha == Approx(4.0).margin(1e-12));  // M+(I) = n Lambda
}

TEST_CASE("bellman cell problem converges with a zero-mean corrector") {
    TorusGrid g(2, 32);
    auto op = make_operator("bellman2d(branches=3,seed=7)");
    Mat A(2, 2);
    A << 0.8, 0.1, 0.1, -0.3;
    CellProblem pb(op, A, make_datum("sincos", g), g);
    CellSolution sol = solve_cell(pb, SolverConfig{});
    REQUIRE(sol.converged);
    REQUIRE(sol.residual_sup <= 1e-10);
    REQUIRE(check_zero_mean(sol.v));
    REQUIRE(sol.v.max_abs() > 1e-4);  // genuinely nonconstant corrector
}

TEST_CASE("shift covariance: f and f + const give the same solution") {
    TorusGrid g(2, 32);
    auto op = make_operator("osc2d");
    Mat A = Mat::Identity(2, 2);
    TorusField f = make_datum("sincos", g);
    TorusField fc = f;
    for (auto& v : fc.values) v += 2.75;
    CellSolution s1 = solve_cell(CellProblem(op, A, f, g), SolverConfig{});
    CellSolution s2 = solve_cell(CellProblem(op, A, fc, g), SolverConfig{});
    REQUIRE(s1.alpha == Approx(s2.alpha).margin(1e-11));
    for (std::size_t i = 0; i < s1.v.values.size(); ++i)
        REQUIRE(s1.v.values[i] == Approx(s2.v.values[i]).margin(1e-11));
}

TEST_CASE("alpha is affine-linear in A for linear operators") {
    TorusGrid g(2, 32);
    auto op = make_operator("osc2d");
    TorusField f = make_datum("cos2", g);
    Rng rng(7);
    Mat A1 = rng.sym(2), A2 = rng.sym(2);
    SolverConfig cfg;
    auto al = [&](const Mat& A) { return solve_cell(CellProblem(op, A, f, g), cfg).alpha; };
    double defect = al(A1 + A2) - al(A1) - al(A2) + al(Mat::Zero(2, 2));
    REQUIRE(std::abs(defect) <= 1e-9);
}

TEST_CASE("scheme monotonicity: raising v at a node raises F_h elsewhere") {
    TorusGrid g(2, 16);
    auto op = make_operator("bellman2d(branches=3,seed=5)");
    Mat A = Mat::Identity(2, 2);
    DirectionSet D = DirectionSet::make(2, "fd");
    detail::TorusScheme S(op, A, g, D);
    Rng rng(13);
    std::vector<double> v(g.node_count());
    for (auto& x : v) x = rng.gaussian();
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t node = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(g.node_count()) - 1));
        std::vector<double> vp = v;
        vp[node] += 0.5;
        for (int probe = 0; probe < 10; ++probe) {
            std::size_t other =
                static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(g.node_count()) - 1));
            if (other == node) continue;
            REQUIRE(S.eval(vp.data(), other) >= S.eval(v.data(), other) - 1e-12);
        }
    }
}

TEST_CASE("uniqueness probe") {
    SECTION("constant coefficients from two seeds") {
        TorusGrid g(2, 16);
        CellProblem pb(make_operator("laplace2d"), Mat::Identity(2, 2), TorusField(g), g);
        auto rep = uniqueness_probe(pb, SolverConfig{}, {1, 2});
        REQUIRE(rep.pass);
        REQUIRE(rep.alpha_spread <= 1e-12);
    }
    SECTION("1-D oscillatory from three seeds") {
        TorusGrid g(1, 128);
        CellProblem pb(make_operator("osc1d"), Mat::Identity(1, 1), TorusField(g), g);
        auto rep = uniqueness_probe(pb, SolverConfig{}, {1, 2, 3});
        REQUIRE(rep.pass);
        REQUIRE(rep.alpha_spread < 1e-6);
    }
    SECTION("bellman from two seeds") {
        TorusGrid g(2, 16);
        CellProblem pb(make_operator("bellman2d(branches=3,seed=1)"), Mat::Identity(2, 2),
                       make_datum("cos2", g), g);
        auto rep = uniqueness_probe(pb, SolverConfig{}, {4, 9});
        REQUIRE(rep.pass);
    }
    SECTION("fewer than two seeds errors") {
        TorusGrid g(2, 16);
        CellProblem pb(make_operator("laplace2d"), Mat::Zero(2, 2), TorusField(g), g);
        REQUIRE_THROWS_AS(uniqueness_probe(pb, SolverConfig{}, {1}), ConfigError);
    }
}

TEST_CASE("non-convergence reports the best iterate") {
    TorusGrid g(2, 16);
    CellProblem pb(make_operator("osc2d"), Mat::Identity(2, 2), make_datum("cos2", g), g);
    SolverConfig cfg;
    cfg.tol = 1e-30;  // unattainable
    CellSolution sol = solve_cell(pb, cfg);
    REQUIRE_FALSE(sol.converged);
    REQUIRE(sol.message.find("not converged") != std::string::npos);
    REQUIRE(sol.residual_sup < 1e-8);  // best iterate is still good
}

TEST_CASE("problem validation") {
    TorusGrid g(2, 16);
    REQUIRE_THROWS_AS(CellProblem(make_operator("osc1d"), Mat::Identity(1, 1),
                                  TorusField(TorusGrid(1, 16)), TorusGrid(1, 7)),
                      ConfigError);
    REQUIRE_THROWS_AS(CellProblem(make_operator("laplace", 3), Mat::Identity(3, 3), TorusField(g), g),
                      ConfigError);
    Mat skew(2, 2);
    skew << 0, 1, -1, 0;
    REQUIRE_THROWS_AS(CellProblem(make_operator("laplace2d"), skew, TorusField(g), g), Error);
}
