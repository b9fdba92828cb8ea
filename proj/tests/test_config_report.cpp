#include "perhom/config.hpp"
#include "perhom/presets.hpp"
#include "perhom/report.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

using namespace perhom;
using Catch::Approx;

TEST_CASE("config parsing") {
    auto dir = std::filesystem::temp_directory_path() / "perhom_test_cfg";
    std::filesystem::create_directories(dir);
    auto path = (dir / "exp.cfg").string();
    std::ofstream(path) << "# cell experiment\n"
                           "op = osc2d\n"
                           "res = 128   # dyadic\n"
                           "tol = 1e-8\n"
                           "A = 1,0;0,1\n"
                           "b = 0.5,-0.5\n"
                           "radii = 2,4,8\n";
    Config cfg = Config::from_file(path);
    REQUIRE(cfg.get("op", "") == "osc2d");
    REQUIRE(cfg.get_int("res", 0) == 128);
    REQUIRE(cfg.get_double("tol", 0) == Approx(1e-8));
    REQUIRE(cfg.get_matrix("A", Mat::Zero(2, 2)) == Mat::Identity(2, 2));
    Vec b = cfg.get_vector("b", Vec::Zero(2));
    REQUIRE(b(0) == 0.5);
    REQUIRE(b(1) == -0.5);
    REQUIRE(cfg.get_list("radii", {}) == std::vector<double>{2, 4, 8});
    REQUIRE(cfg.get("missing", "dflt") == "dflt");
    REQUIRE_THROWS_AS(cfg.require("missing"), ConfigError);

    cfg.set("res=64");
    REQUIRE(cfg.get_int("res", 0) == 64);
    REQUIRE(cfg.solver_config().tol == Approx(1e-8));

    SECTION("diagnostics carry the offending key") {
        cfg.set("tol=abc");
        REQUIRE_THROWS_WITH(cfg.get_double("tol", 0),
                            Catch::Matchers::ContainsSubstring("tol"));
    }
    SECTION("malformed lines carry the line number") {
        auto bad = (dir / "bad.cfg").string();
        std::ofstream(bad) << "op = ok\nthis line has no equals\n";
        REQUIRE_THROWS_WITH(Config::from_file(bad), Catch::Matchers::ContainsSubstring(":2"));
    }
    SECTION("non-square matrix rejected") {
        cfg.set("A=1,0,0;0,1,0");
        REQUIRE_THROWS_AS(cfg.get_matrix("A", Mat::Zero(2, 2)), ConfigError);
    }
}

TEST_CASE("reports") {
    Config cfg;
    cfg.set("op=laplace2d");
    cfg.set("seed=7");
    Json results;
    results["alpha"] = 2.0;
    results["residual"] = checked_value(1e-12, 1e-10, true);

    Json r1 = build_report("cell", cfg, results);
    Json r2 = build_report("cell", cfg, results);
    SECTION("result hash is timestamp independent and deterministic") {
        REQUIRE(r1["provenance"]["result_hash"] == r2["provenance"]["result_hash"]);
        REQUIRE(r1["provenance"]["config_hash"] == r2["provenance"]["config_hash"]);
    }
    SECTION("result hash changes with the results") {
        Json other = results;
        other["alpha"] = 2.0000001;
        Json r3 = build_report("cell", cfg, other);
        REQUIRE(r1["provenance"]["result_hash"] != r3["provenance"]["result_hash"]);
    }
    SECTION("checked values carry their tolerance") {
        REQUIRE(r1["results"]["residual"]["tol"] == 1e-10);
        REQUIRE(r1["results"]["residual"]["pass"] == true);
    }
    SECTION("report and csv files are written") {
        auto dir = (std::filesystem::temp_directory_path() / "perhom_test_out").string();
        write_report(r1, dir);
        REQUIRE(std::filesystem::exists(std::filesystem::path(dir) / "report.json"));
        write_csv(dir, "curve.csv", {"R", "err"}, {{2, 0.5}, {4, 0.125}});
        std::ifstream is(std::filesystem::path(dir) / "curve.csv");
        std::string line;
        std::getline(is, line);
        REQUIRE(line == "R,err");
        std::getline(is, line);
        REQUIRE(line == "2,0.5");
    }
}

TEST_CASE("preset catalog") {
    Json cat = preset_catalog();
    bool has_laplace2d = false, has_osc1d = false;
    for (const auto& e : cat["operators"]) {
        if (e["name"] == "laplace2d") has_laplace2d = true;
        if (e["name"] == "osc1d") has_osc1d = true;
    }
    REQUIRE(has_laplace2d);
    REQUIRE(has_osc1d);

    SECTION("catalog entries round-trip through spec strings") {
        for (const auto& e : cat["operators"]) {
            std::string name = e["name"];
            PresetSpec ps = PresetSpec::parse(name);
            REQUIRE(ps.canonical() == name);
        }
        PresetSpec withargs = PresetSpec::parse("bellman2d(branches=3,seed=7)");
        REQUIRE(PresetSpec::parse(withargs.canonical()).canonical() == withargs.canonical());
    }
    SECTION("every catalog operator constructs") {
        for (const auto& e : cat["operators"]) {
            std::string name = e["name"];
            REQUIRE_NOTHROW(make_operator(name, 2));
        }
    }
    SECTION("unknown names are config errors") {
        REQUIRE_THROWS_AS(make_operator("helmholtz"), ConfigError);
        TorusGrid g(2, 8);
        REQUIRE_THROWS_AS(make_datum("chirp", g), ConfigError);
    }
}
