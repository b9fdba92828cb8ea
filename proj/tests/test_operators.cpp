#include "perhom/operators.hpp"
#include "perhom/presets.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

using namespace perhom;
using Catch::Approx;

TEST_CASE("eval_operator: linear trace") {
    auto op = EllipticOperator::linear(CoeffMatrix::constant(Mat::Identity(2, 2)), 1.0, 1.0);
    Mat M(2, 2);
    M << 2, 0, 0, -3;
    REQUIRE(op(M, Vec::Zero(2)) == -1.0);
}

TEST_CASE("eval_operator: bellman minimum of two branches") {
    std::vector<CoeffMatrix> branches = {CoeffMatrix::constant(Mat::Identity(2, 2)),
                                         CoeffMatrix::constant(2 * Mat::Identity(2, 2))};
    auto op = EllipticOperator::bellman(branches, 1.0, 2.0);
    Mat M = -Mat::Identity(2, 2);
    REQUIRE(op(M, Vec::Zero(2)) == -4.0);  // min(-2, -4)
}

TEST_CASE("eval_operator: oscillatory coefficient at an off-node point") {
    auto g = [](const Vec& x) { return 2.0 + std::sin(2 * kPi * x(0)); };
    auto op = EllipticOperator::linear(CoeffMatrix::isotropic(2, g), 1.0, 3.0);
    Vec x(2);
    x << 0.25, 0.0;
    REQUIRE(op(Mat::Identity(2, 2), x) == Approx(6.0).margin(1e-14));
}

TEST_CASE("eval_operator rejects non-symmetric arguments") {
    auto op = make_operator("laplace2d");
    Mat M(2, 2);
    M << 0, 1, -1, 0;
    REQUIRE_THROWS_AS(op(M, Vec::Zero(2)), Error);
}

TEST_CASE("eval_pucci basics") {
    REQUIRE(eval_pucci(PucciSign::Plus, Mat::Zero(3, 3), 1.0, 2.0) == 0.0);
    REQUIRE(eval_pucci(PucciSign::Minus, Mat::Zero(3, 3), 1.0, 2.0) == 0.0);
    Mat M(2, 2);
    M << 2, 0, 0, -3;
    REQUIRE(eval_pucci(PucciSign::Plus, M, 1.0, 2.0) == Approx(1.0));    // 2*2 + 1*(-3)
    REQUIRE(eval_pucci(PucciSign::Minus, M, 1.0, 2.0) == Approx(-4.0));  // 1*2 + 2*(-3)
    REQUIRE_THROWS_AS(eval_pucci(PucciSign::Plus, M, 2.0, 1.0), Error);
}

TEST_CASE("eval_pucci against the 2x2 eigenvalue oracle") {
    Rng rng(19);
    for (int s = 0; s < 50; ++s) {
        Mat M = rng.sym(2);
        auto [k1, k2] = oracles::eig2(M);
        double lam = 0.7, Lam = 2.3;
        REQUIRE(eval_pucci(PucciSign::Plus, M, lam, Lam) ==
                Approx(oracles::pucci_from_eigs(true, {k1, k2}, lam, Lam)).margin(1e-10));
        REQUIRE(eval_pucci(PucciSign::Minus, M, lam, Lam) ==
                Approx(oracles::pucci_from_eigs(false, {k1, k2}, lam, Lam)).margin(1e-10));
    }
}

TEST_CASE("eval_pucci: order and duality on random 3x3") {
    Rng rng(23);
    for (int s = 0; s < 50; ++s) {
        Mat M = rng.sym(3);
        double lo = eval_pucci(PucciSign::Minus, M, 1.0, 2.5);
        double hi = eval_pucci(PucciSign::Plus, M, 1.0, 2.5);
        REQUIRE(lo <= hi + 1e-12);
        REQUIRE(lo == Approx(-eval_pucci(PucciSign::Plus, -M, 1.0, 2.5)).margin(1e-10));
    }
}

TEST_CASE("degenerate Pucci reduces to lambda * trace") {
    Rng rng(29);
    for (int s = 0; s < 20; ++s) {
        Mat M = rng.sym(3);
        REQUIRE(eval_pucci(PucciSign::Plus, M, 1.7, 1.7) == Approx(1.7 * M.trace()).margin(1e-12));
    }
}

TEST_CASE("check_uniform_ellipticity") {
    SECTION("Pucci saturates its own sandwich") {
        auto op = EllipticOperator::pucci(2, PucciSign::Plus, 1.0, 2.0);
        auto rep = check_uniform_ellipticity(op, 200, 5);
        REQUIRE(rep.pass);
        REQUIRE(rep.worst_upper_margin >= -1e-12);
        REQUIRE(rep.worst_upper_margin <= 1e-9);  // zero margin at N = tI
    }
    SECTION("constant anisotropic passes") {
        Mat a(2, 2);
        a << 1, 0, 0, 2;
        auto op = EllipticOperator::linear(CoeffMatrix::constant(a), 1.0, 2.0);
        REQUIRE(check_uniform_ellipticity(op, 200, 7).pass);
    }
    SECTION("random Bellman passes on 1000 samples") {
        auto op = make_operator("bellman2d(branches=5,seed=3)");
        REQUIRE(check_uniform_ellipticity(op, 1000, 11).pass);
    }
    SECTION("declared constants that are too tight fail construction") {
        Mat a(2, 2);
        a << 1, 0, 0, 3;
        REQUIRE_THROWS_AS(EllipticOperator::linear(CoeffMatrix::constant(a), 1.0, 2.0),
                          ConfigError);
    }
}

TEST_CASE("bellman branch values are concave in M") {
    auto op = make_operator("bellman2d(branches=4,seed=9)");
    Rng rng(31);
    for (int s = 0; s < 100; ++s) {
        Mat M = rng.sym(2), N = rng.sym(2);
        Vec x = rng.point(2);
        double mid = op((M + N) / 2, x);
        REQUIRE(mid >= 0.5 * op(M, x) + 0.5 * op(N, x) - 1e-12);
    }
}

TEST_CASE("operator is Lipschitz in M with constant Lambda sqrt(n)") {
    auto op = make_operator("bellman2d(branches=3,seed=13)");
    Rng rng(37);
    const double C = op.Lambda() * std::sqrt(2.0);
    for (int s = 0; s < 100; ++s) {
        Mat M = rng.sym(2), N = rng.sym(2);
        Vec x = rng.point(2);
        REQUIRE(std::abs(op(M, x) - op(N, x)) <= C * (M - N).norm() + 1e-12);
    }
}

TEST_CASE("operator JSON descriptions load") {
    auto dir = std::filesystem::temp_directory_path() / "perhom_test_ops";
    std::filesystem::create_directories(dir);

    SECTION("linear with constant coefficients") {
        auto path = (dir / "lin.json").string();
        std::ofstream(path) << R"({"variant":"linear","n":2,"lambda":1.0,"Lambda":2.0,
                                   "constant":[[1.0,0.0],[0.0,2.0]]})";
        auto op = make_operator("file:" + path);
        Mat M(2, 2);
        M << 1, 0, 0, 1;
        REQUIRE(op(M, Vec::Zero(2)) == Approx(3.0));
    }
    SECTION("linear with field-backed coefficients") {
        TorusGrid g(2, 16);
        std::vector<TorusField> entries;
        entries.push_back(TorusField::sample(g, [](const Vec& x) { return 2.0 + std::sin(2 * kPi * x(0)); }));
        entries.push_back(TorusField(g, 0.0));
        entries.push_back(TorusField(g, 1.0));
        std::vector<std::string> paths;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            auto p = (dir / ("e" + std::to_string(i) + ".pfld")).string();
            save_field_binary(entries[i], p);
            paths.push_back(p);
        }
        auto path = (dir / "linf.json").string();
        std::ofstream(path) << R"({"variant":"linear","n":2,"lambda":0.9,"Lambda":3.1,"entries":[")"
                            << paths[0] << R"(",")" << paths[1] << R"(",")" << paths[2] << R"("]})";
        auto op = make_operator("file:" + path);
        // on a node, the sampled coefficient is exact
        Vec x = g.node(g.nearest_node(Vec::Zero(2)));
        double expect = (2.0 + std::sin(2 * kPi * x(0))) + 1.0;
        REQUIRE(op(Mat::Identity(2, 2), x) == Approx(expect).margin(1e-14));
    }
    SECTION("shifted pucci") {
        auto path = (dir / "sp.json").string();
        std::ofstream(path) << R"({"variant":"shifted","offset":0.5,
            "base":{"variant":"pucci","sign":"minus","n":2,"lambda":1.0,"Lambda":2.0}})";
        auto op = make_operator("file:" + path);
        REQUIRE(op(Mat::Zero(2, 2), Vec::Zero(2)) == Approx(0.5));
    }
    SECTION("unknown variant errors") {
        auto path = (dir / "bad.json").string();
        std::ofstream(path) << R"({"variant":"quasilinear"})";
        REQUIRE_THROWS_AS(make_operator("file:" + path), ConfigError);
    }
}

TEST_CASE("bellman preset is reproducible under its seed") {
    auto op1 = make_operator("bellman2d(branches=3,seed=7)");
    auto op2 = make_operator("bellman2d(branches=3,seed=7)");
    Rng rng(41);
    for (int s = 0; s < 20; ++s) {
        Vec x = rng.point(2);
        Mat M = rng.sym(2);
        REQUIRE(op1(M, x) == op2(M, x));
    }
    auto op3 = make_operator("bellman2d(branches=3,seed=8)");
    bool differs = false;
    for (int s = 0; s < 20 && !differs; ++s) {
        Vec x = rng.point(2);
        Mat M = rng.sym(2);
        differs = op1(M, x) != op3(M, x);
    }
    REQUIRE(differs);
}
