#include "perhom/exterior.hpp"
#include "perhom/pipelines.hpp"
#include "perhom/presets.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace perhom;
using Catch::Approx;

namespace {
Decomposition zero_farfield(int n, int res) {
    Decomposition dec;
    dec.A = Mat::Zero(n, n);
    dec.b = Vec::Zero(n);
    dec.c = 0;
    dec.v = TorusField(TorusGrid(n, res), 0.0);
    dec.v.zero_mean = true;
    return dec;
}
}  // namespace

TEST_CASE("barrier_params") {
    SECTION("admissibility constant exceeds the threshold") {
        DataBounds db{0, 0, 1.0, 0.5, 2.0};
        auto bp = barrier_params(3, 1.0, 2.0, 1.0, 3.0, db);
        REQUIRE(bp.A_hat == Approx(3.3));
        REQUIRE(bp.A_hat > 3.0 * 2.0 / (2.0 * 1.0 * 1.0));
        REQUIRE(bp.B_hat > 0);
        REQUIRE(std::isfinite(bp.B_hat));
        REQUIRE(bp.margin >= -1e-9);
    }
    SECTION("trivial data admits Bhat = 0") {
        DataBounds db{0, 0, 0, 1.0, 0};
        auto bp = barrier_params(3, 1.0, 1.0, 1.0, 3.0, db);
        REQUIRE(bp.B_hat == 0.0);
    }
    SECTION("generic three-dimensional parameters") {
        DataBounds db{-0.5, 0.5, 1.0, 1.0, 3.0};
        auto bp = barrier_params(3, 1.0, 1.5, 0.5, 3.0, db);
        REQUIRE(bp.A_hat == Approx(1.1 * 3 * 1.5 / (2 * 1.0 * 0.25)));  // 9.9
        REQUIRE(std::isfinite(bp.B_hat));
        REQUIRE(bp.B_hat > 0);
    }
    SECTION("underflowing collar gap is reported as infeasible") {
        DataBounds db{0, 0, 1.0, 1.0, 1.0};
        REQUIRE_THROWS_AS(barrier_params(3, 1.0, 2.0, 1.0, 200.0, db), SolverError);
    }
}

TEST_CASE("barrier collar inequalities hold for three presets") {
    struct Preset {
        std::string op;
        int n;
        double lam, Lam;
        double rho;
    };
    std::vector<Preset> presets = {
        {"laplace3d", 3, 1.0, 1.0, 1.0},
        {"osc3d_r15", 3, 1.0, 1.5, 0.5},
        {"const_aniso(ratio=2,n=2)", 2, 1.0, 2.0, 1.0},
    };
    for (const auto& p : presets) {
        auto op = make_operator(p.op, p.n);
        DataBounds db{-1.0, 1.0, 1.0, 1.0, 2.0};
        double r0 = 3.0;
        auto bp = barrier_params(p.n, p.lam, p.Lam, p.rho, r0, db);
        // touching ball center for the boundary point x0 = (r_in, 0, ...)
        bp.center = Vec::Zero(p.n);
        bp.center(0) = 1.0 - p.rho;
        auto rep = check_barrier_collar(op, bp, db, 1.0, 0.25);
        INFO(p.op);
        REQUIRE(rep.nodes_tested > 0);
        REQUIRE(rep.pass);
    }
}

TEST_CASE("exterior_solve") {
    TorusGrid g(3, 4);
    auto lap = make_operator("laplace3d");
    SECTION("all-zero data gives the zero solution") {
        AnnulusProblem pb{lap, TorusField(g), 1.0, 1.0, 4.0, 4,
                          [](const Vec&) { return 0.0; }, zero_farfield(3, 4)};
        auto res = exterior_solve(pb, SolverConfig{});
        REQUIRE(res.converged);
        double sup = 0;
        for (double v : res.u.u) sup = std::max(sup, std::abs(v));
        REQUIRE(sup <= 1e-12);
    }
    SECTION("radial harmonic oracle at first order") {
        const double R = 8.0;
        AnnulusProblem pb{lap, TorusField(g), 1.0, 1.0, R, 4,
                          [](const Vec&) { return 1.0; }, zero_farfield(3, 4)};
        SolverConfig cfg;
        cfg.tol = 1e-9;
        cfg.lin_tol = 1e-11;
        auto res = exterior_solve(pb, cfg);
        REQUIRE(res.converged);
        const Lattice& L = *res.u.lat;
        double sup = 0;
        for (std::size_t i = 0; i < L.active_count(); ++i) {
            double r = L.node_of_lin(L.active_lin[i]).norm();
            double exact = (1.0 / r - 1.0 / R) / (1.0 - 1.0 / R);
            sup = std::max(sup, std::abs(res.u.u[i] - exact));
        }
        REQUIRE(sup <= 0.15);  // O(h) staircase accuracy at h = 1/4

        SECTION("comparison sandwich with Cbar from the inner mismatch") {
            double Cbar = inner_mismatch(pb);
            REQUIRE(Cbar == Approx(1.0).margin(1e-12));
            auto sw = check_comparison_sandwich(res.u, witness_function(pb.farfield), Cbar, 1e-6);
            REQUIRE(sw.pass);
        }
        SECTION("decay fit lands near the harmonic exponent") {
            auto fit = decay_fit(res.u, witness_function(pb.farfield),
                                 {1.25, 1.5, 1.75, 2.0, 2.5, 3.0}, 1.0, 1.0);
            REQUIRE_FALSE(fit.boundedness_only);
            REQUIRE(fit.slope <= -0.8);
            REQUIRE(fit.slope >= -1.3);
            REQUIRE(fit.pass);  // bound 1 - (n-1) = -1 plus slack
        }
    }
    SECTION("domain validation") {
        AnnulusProblem bad{lap, TorusField(g), 1.0, 1.0, 2.0, 4,
                           [](const Vec&) { return 0.0; }, zero_farfield(3, 4)};
        REQUIRE_THROWS_AS(exterior_solve(bad, SolverConfig{}), ConfigError);
        AnnulusProblem thin{lap, TorusField(g), 0.2, 0.2, 4.0, 4,
                            [](const Vec&) { return 0.0; }, zero_farfield(3, 4)};
        REQUIRE_THROWS_AS(exterior_solve(thin, SolverConfig{}), ConfigError);
    }
}

TEST_CASE("decay_fit on synthetic fields") {
    auto lat = std::make_shared<Lattice>(Lattice::annulus(3, 1.0, 8.0, 0.25, 1));
    LatticeField u;
    u.lat = lat;
    u.u.resize(lat->active_count());
    SECTION("u = 1/r fits slope -1") {
        for (std::size_t i = 0; i < lat->active_count(); ++i)
            u.u[i] = 1.0 / lat->node_of_lin(lat->active_lin[i]).norm();
        auto fit = decay_fit(u, [](const Vec&) { return 0.0; }, {1.5, 2, 2.5, 3, 4, 6}, 1.0, 1.0);
        REQUIRE(fit.slope == Approx(-1.0).margin(0.1));
        REQUIRE(fit.pass);
    }
    SECTION("u identical to w is degenerate") {
        for (std::size_t i = 0; i < lat->active_count(); ++i) u.u[i] = 3.0;
        auto fit = decay_fit(u, [](const Vec&) { return 3.0; }, {1.5, 2, 2.5, 3}, 1.0, 1.0);
        REQUIRE(fit.degenerate);
        REQUIRE(fit.pass);
    }
    SECTION("large ellipticity ratio only reports boundedness") {
        for (std::size_t i = 0; i < lat->active_count(); ++i)
            u.u[i] = 1.0 / lat->node_of_lin(lat->active_lin[i]).norm();
        auto fit = decay_fit(u, [](const Vec&) { return 0.0; }, {1.5, 2, 2.5, 3}, 1.0, 2.5);
        REQUIRE(fit.boundedness_only);
        REQUIRE(fit.max_abs > 0);
    }
    SECTION("fewer than four usable shells errors") {
        for (std::size_t i = 0; i < lat->active_count(); ++i) u.u[i] = 0.0;
        REQUIRE_THROWS_AS(
            decay_fit(u, [](const Vec&) { return 0.0; }, {1.5, 2.0}, 1.0, 1.0), Error);
    }
}

TEST_CASE("asymptotic extraction") {
    TorusGrid g(2, 8);
    auto op = make_operator("osc2d");
    TorusField f = make_datum("cos1", g);
    HbarEvaluator hbar(op, f, g);
    auto rr = recession_root(hbar, mean(f));
    auto dec = entire_witness(op, f, rr.t * Mat::Identity(2, 2), Vec::Zero(2), 0.0, g,
                              SolverConfig{});
    ScalarFn w = witness_function(dec);
    auto lat = std::make_shared<Lattice>(Lattice::annulus(2, 1.0, 12.0, 1.0 / 8, 1));
    std::vector<double> radii = {2, 3, 4, 5, 6, 8};

    SECTION("witness restricted to the annulus round-trips") {
        LatticeField u;
        u.lat = lat;
        u.u.resize(lat->active_count());
        for (std::size_t i = 0; i < lat->active_count(); ++i)
            u.u[i] = w(lat->node_of_lin(lat->active_lin[i]));
        auto res = asymptotic_extraction(u, 8, op.lambda(), op.Lambda(), radii);
        REQUIRE_FALSE(res.failed);
        REQUIRE((res.dec.A - dec.A).norm() <= 1e-8);
        // n = 2 sits outside the Lambda/lambda < n-1 decay regime: the fit
        // reports boundedness only, and u matches the profile to rounding
        REQUIRE(res.fit.boundedness_only);
        REQUIRE(res.fit.max_abs <= 1e-12);
    }
    SECTION("decaying perturbation is seen in the fit (3-D regime)") {
        auto lat3 = std::make_shared<Lattice>(Lattice::annulus(3, 1.0, 8.0, 0.25, 1));
        LatticeField u;
        u.lat = lat3;
        u.u.resize(lat3->active_count());
        for (std::size_t i = 0; i < lat3->active_count(); ++i) {
            Vec x = lat3->node_of_lin(lat3->active_lin[i]);
            u.u[i] = 1.0 / x.norm();  // zero far field plus a decaying tail
        }
        auto res = asymptotic_extraction(u, 4, 1.0, 1.0, {1.5, 2, 2.5, 3, 4, 5});
        REQUIRE_FALSE(res.failed);
        REQUIRE(res.dec.A.norm() <= 1e-2);
        REQUIRE_FALSE(res.fit.boundedness_only);
        REQUIRE(res.fit.slope == Approx(-1.0).margin(0.2));
    }
    SECTION("non-decaying noise defeats extraction with a diagnostic") {
        LatticeField u;
        u.lat = lat;
        u.u.resize(lat->active_count());
        for (std::size_t i = 0; i < lat->active_count(); ++i) {
            Vec x = lat->node_of_lin(lat->active_lin[i]);
            u.u[i] = w(x) + 0.5 * std::sin(5.0 * x.norm());
        }
        auto res = asymptotic_extraction(u, 8, 1.0, 1.0, radii, 1e-3);
        REQUIRE(res.failed);
        REQUIRE(res.message.find("no admissible asymptotic profile") != std::string::npos);
    }
}

TEST_CASE("outer truncation envelope") {
    TorusGrid g(3, 4);
    auto lap = make_operator("laplace3d");
    SolverConfig cfg;
    auto solve_at = [&](double R) {
        AnnulusProblem pb{lap, TorusField(g), 1.0, 1.0, R, 4,
                          [](const Vec&) { return 1.0; }, zero_farfield(3, 4)};
        return exterior_solve(pb, cfg);
    };
    auto u1 = solve_at(4.0);
    auto u2 = solve_at(8.0);
    auto rep = check_outer_truncation(u1.u, u2.u, {1.5, 2.0, 2.5, 3.0}, 1.0, 1.0);
    REQUIRE(rep.pass);
    REQUIRE(rep.radii.size() == 4);
}
