#include "perhom/hbar.hpp"
#include "perhom/presets.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace perhom;
using Catch::Approx;

namespace {
const double kSqrt3 = 1.7320508075688772;
}

TEST_CASE("hbar: identity coefficients give the trace") {
    TorusGrid g(2, 16);
    HbarEvaluator hbar(make_operator("laplace2d"), TorusField(g), g);
    Rng rng(3);
    for (int s = 0; s < 5; ++s) {
        Mat A = rng.sym(2);
        REQUIRE(hbar(A) == Approx(A.trace()).margin(1e-10));
    }
}

TEST_CASE("hbar: cache hits are bit-identical") {
    TorusGrid g(2, 16);
    HbarEvaluator hbar(make_operator("osc2d"), make_datum("cos2", g), g);
    Mat A = Mat::Identity(2, 2);
    double a1 = hbar(A);
    double a2 = hbar(A);
    REQUIRE(a1 == a2);
    REQUIRE(hbar.cache_size() == 1);
}

TEST_CASE("hbar: x-independent Bellman operator homogenizes to itself") {
    Mat d2(2, 2);
    d2 << 2.0, 0.0, 0.0, 0.8;
    std::vector<CoeffMatrix> branches = {CoeffMatrix::constant(Mat::Identity(2, 2)),
                                         CoeffMatrix::constant(d2)};
    auto op = EllipticOperator::bellman(branches, 0.8, 2.0);
    op.mark_x_independent();
    TorusGrid g(2, 16);
    HbarEvaluator hbar(op, TorusField(g), g);
    Rng rng(5);
    for (int s = 0; s < 5; ++s) {
        Mat A = rng.sym(2);
        REQUIRE(hbar(A) == Approx(op(A, Vec::Zero(2))).margin(1e-10));
    }
}

TEST_CASE("hbar: 1-D oscillatory value") {
    TorusGrid g(1, 256);
    HbarEvaluator hbar(make_operator("osc1d"), TorusField(g), g);
    REQUIRE(hbar(Mat::Identity(1, 1)) == Approx(kSqrt3).margin(1e-4));
}

TEST_CASE("invariant measure") {
    SECTION("constant coefficients give m = 1") {
        TorusGrid g(2, 16);
        auto im = invariant_measure(make_operator("const_aniso(ratio=2)"), g);
        for (double v : im.m.values) REQUIRE(v == Approx(1.0).margin(1e-10));
        REQUIRE(std::abs(im.mean_value - 1.0) <= 1e-12);
    }
    SECTION("1-D: m proportional to 1/a") {
        TorusGrid g(1, 256);
        auto im = invariant_measure(make_operator("osc1d"), g);
        REQUIRE(im.positivity_min > 0);
        for (std::size_t i = 0; i < g.node_count(); ++i) {
            double x = g.node(i)(0);
            double expect = kSqrt3 / (2.0 + std::sin(2 * kPi * x));
            REQUIRE(im.m.values[i] == Approx(expect).margin(1e-4));
        }
    }
    SECTION("2-D at res 16 matches the dense null-space oracle") {
        TorusGrid g(2, 16);
        auto op = make_operator("osc2d");
        auto im = invariant_measure(op, g);
        Mat L = Mat(detail::assemble_linear_torus(op, g, DirectionSet::make(2, "fd")));
        Vec oracle = oracles::dense_kernel_mean1(L.transpose());
        for (std::size_t i = 0; i < g.node_count(); ++i)
            REQUIRE(im.m.values[i] == Approx(oracle(static_cast<Eigen::Index>(i))).margin(1e-7));
    }
    SECTION("rejects non-linear operators") {
        TorusGrid g(2, 16);
        REQUIRE_THROWS_AS(invariant_measure(make_operator("bellman2d(seed=1)"), g), ConfigError);
    }
}

TEST_CASE("hbar_linear_formula") {
    SECTION("identity coefficients: trace and Q = I") {
        TorusGrid g(2, 16);
        auto op = make_operator("laplace2d");
        auto im = invariant_measure(op, g);
        Mat A(2, 2);
        A << 1.5, 0.2, 0.2, -1.0;
        auto lf = hbar_linear_formula(op, TorusField(g), A, im);
        REQUIRE(lf.value == Approx(A.trace()).margin(1e-10));
        REQUIRE((lf.Q - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-10);
    }
    SECTION("1-D harmonic mean agrees with the cell solve") {
        TorusGrid g(1, 256);
        auto op = make_operator("osc1d");
        auto im = invariant_measure(op, g);
        auto lf = hbar_linear_formula(op, TorusField(g), Mat::Identity(1, 1), im);
        REQUIRE(lf.value == Approx(kSqrt3).margin(1e-4));
        HbarEvaluator hbar(op, TorusField(g), g);
        REQUIRE(lf.value == Approx(hbar(Mat::Identity(1, 1))).margin(1e-9));
    }
    SECTION("pure datum term vanishes when m = 1") {
        TorusGrid g(2, 32);
        auto op = make_operator("laplace2d");
        auto im = invariant_measure(op, g);
        auto lf = hbar_linear_formula(op, make_datum("sin1", g), Mat::Zero(2, 2), im);
        REQUIRE(lf.value == Approx(0.0).margin(1e-10));
    }
    SECTION("Q is symmetric positive definite for elliptic coefficients") {
        TorusGrid g(2, 32);
        auto op = make_operator("osc2d_aniso");
        auto im = invariant_measure(op, g);
        auto lf = hbar_linear_formula(op, TorusField(g), Mat::Zero(2, 2), im);
        Vec ev = sym_eigenvalues(lf.Q);
        REQUIRE(ev.minCoeff() > 0.0);
    }
}

TEST_CASE("hbar ellipticity sandwich") {
    SECTION("x-independent operator passes with zero slack") {
        TorusGrid g(2, 16);
        HbarEvaluator hbar(make_operator("const_aniso(ratio=2)"), TorusField(g), g);
        auto rep = check_hbar_ellipticity(hbar, 20, 11, 1e-9);
        REQUIRE(rep.pass);
    }
    SECTION("oscillatory linear operator passes on 50 pairs") {
        TorusGrid g(2, 32);
        HbarEvaluator hbar(make_operator("osc2d"), make_datum("cos2", g), g);
        auto rep = check_hbar_ellipticity(hbar, 50, 13);
        REQUIRE(rep.pass);
    }
    SECTION("N = 0 increment is exactly zero through the cache") {
        TorusGrid g(2, 16);
        HbarEvaluator hbar(make_operator("osc2d"), TorusField(g), g);
        Mat M = Mat::Identity(2, 2) * 0.7;
        REQUIRE(hbar(M + Mat::Zero(2, 2)) - hbar(M) == 0.0);
    }
}

TEST_CASE("hbar concavity") {
    SECTION("linear operators are affine: equality within slack") {
        TorusGrid g(2, 16);
        HbarEvaluator hbar(make_operator("osc2d"), TorusField(g), g);
        auto rep = check_hbar_concavity(hbar, 20, 17);
        REQUIRE(rep.pass);
        REQUIRE(std::abs(rep.worst_lower_margin) <= 1e-8);
    }
    SECTION("bellman operators are concave") {
        TorusGrid g(2, 16);
        HbarEvaluator hbar(make_operator("bellman2d(branches=2,seed=3)"), TorusField(g), g);
        auto rep = check_hbar_concavity(hbar, 20, 19);
        REQUIRE(rep.pass);
    }
    SECTION("M = N gives exact equality via the cache") {
        TorusGrid g(2, 16);
        HbarEvaluator hbar(make_operator("bellman2d(branches=2,seed=5)"), TorusField(g), g);
        Mat M = Mat::Identity(2, 2);
        REQUIRE(hbar((M + M) / 2) - 0.5 * hbar(M) - 0.5 * hbar(M) == 0.0);
    }
    SECTION("convex Pucci+ is rejected") {
        TorusGrid g(2, 16);
        HbarEvaluator hbar(make_operator("pucci_plus", 2), TorusField(g), g);
        REQUIRE_THROWS_AS(check_hbar_concavity(hbar, 5, 23), ConfigError);
    }
}

TEST_CASE("recession root") {
    SECTION("identity coefficients, target 0") {
        TorusGrid g(2, 16);
        HbarEvaluator hbar(make_operator("laplace2d"), TorusField(g), g);
        auto rr = recession_root(hbar, 0.0);
        REQUIRE(std::abs(rr.t) <= 1e-8);
    }
    SECTION("Pucci+ closed form: M+(tI) = n Lambda t for t > 0") {
        TorusGrid g(2, 16);
        HbarEvaluator hbar(make_operator("pucci_plus(lambda=1,Lambda=2)", 2), TorusField(g), g);
        auto rr = recession_root(hbar, 4.0);
        REQUIRE(rr.t == Approx(1.0).margin(1e-8));
    }
    SECTION("1-D oscillatory, target sqrt(3)") {
        TorusGrid g(1, 128);
        HbarEvaluator hbar(make_operator("osc1d"), TorusField(g), g);
        auto rr = recession_root(hbar, kSqrt3);
        REQUIRE(rr.t == Approx(1.0).margin(1e-6));
    }
    SECTION("slope of t -> Fbar(tI) sits in [n lambda, n Lambda]") {
        TorusGrid g(2, 16);
        auto op = make_operator("bellman2d(branches=3,seed=11)");
        HbarEvaluator hbar(op, TorusField(g), g);
        Mat I = Mat::Identity(2, 2);
        const double dt = 0.5;
        for (int k = -2; k <= 2; ++k) {
            double slope = (hbar((k * dt + dt) * I) - hbar(k * dt * I)) / dt;
            REQUIRE(slope >= 2 * op.lambda() - 1e-6);
            REQUIRE(slope <= 2 * op.Lambda() + 1e-6);
        }
    }
    SECTION("bracket expansion limit errors") {
        TorusGrid g(2, 16);
        HbarEvaluator hbar(make_operator("laplace2d"), TorusField(g), g);
        REQUIRE_THROWS_AS(recession_root(hbar, 1e9, -1, 1, 1e-8, 2), SolverError);
    }
}
