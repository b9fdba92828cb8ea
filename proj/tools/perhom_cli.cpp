// perhom: configuration-driven experiments for periodic homogenization of
// fully nonlinear uniformly elliptic equations.
//
//   perhom <subcommand> --config <file> [--set key=value ...] [--out <dir>]
//
// Exit codes: 0 pass, 2 property failure, 3 solver failure, 4 config error.

#include "perhom/perhom.hpp"
#include "perhom/pipelines.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

using namespace perhom;

struct Experiment {
    Config cfg;
    std::string out_dir;
    EllipticOperator op;
    TorusGrid grid;
    TorusField f;
    SolverConfig scfg;
    std::uint64_t seed = 0;

    Experiment(Config c, std::string out, int default_res = 64)
        : cfg(std::move(c)),
          out_dir(std::move(out)),
          op(make_operator(cfg.get("op", "laplace"), cfg.get_int("n", 2), cfg.get_seed("seed", 1))),
          grid(op.dim(), cfg.get_int("res", default_res)),
          f(make_datum(cfg.get("f", "zero"), grid)),
          scfg(cfg.solver_config()),
          seed(cfg.get_seed("seed", 1)) {}

    int n() const { return op.dim(); }

    Mat A() const { return cfg.get_matrix("A", Mat::Zero(n(), n())); }
    Vec b() const { return cfg.get_vector("b", Vec::Zero(n())); }
    double c() const { return cfg.get_double("c", 0.0); }

    void emit(const std::string& sub, Json results, bool pass) {
        results["pass"] = pass;
        if (const char* t = std::getenv("PERHOM_THREADS")) results["threads_env"] = t;
        Json rep = build_report(sub, cfg, std::move(results));
        std::cout << rep.dump(2) << std::endl;
        if (!out_dir.empty()) write_report(rep, out_dir);
    }
};

/// Input fingerprints: operator spec, datum samples, grid shape.
Json input_hashes(const Experiment& ex) {
    std::string fbytes(reinterpret_cast<const char*>(ex.f.values.data()),
                       ex.f.values.size() * sizeof(double));
    return Json{{"op", fnv1a(ex.cfg.get("op", "laplace"))},
                {"f", fnv1a(fbytes)},
                {"grid", std::to_string(ex.grid.dim) + "x" + std::to_string(ex.grid.res)}};
}

Json decomposition_json(const Decomposition& dec) {
    Json j;
    j["A"] = std::vector<std::vector<double>>();
    for (int i = 0; i < dec.A.rows(); ++i) {
        std::vector<double> row;
        for (int k = 0; k < dec.A.cols(); ++k) row.push_back(dec.A(i, k));
        j["A"].push_back(row);
    }
    j["b"] = std::vector<double>(dec.b.data(), dec.b.data() + dec.b.size());
    j["c"] = dec.c;
    j["v_sup"] = dec.v.max_abs();
    j["residual_sup"] = dec.residual_sup;
    return j;
}

int run_cell(Experiment& ex) {
    CellProblem pb(ex.op, ex.A(), ex.f, ex.grid);
    CellSolution sol = solve_cell(pb, ex.scfg);
    Json res;
    res["alpha"] = sol.alpha;
    res["residual_sup"] = checked_value(sol.residual_sup, ex.scfg.tol, sol.converged);
    res["iterations"] = sol.iterations;
    res["v_sup"] = sol.v.max_abs();
    res["v_mean"] = mean(sol.v);
    if (!sol.message.empty()) res["message"] = sol.message;
    bool pass = sol.converged;
    if (ex.cfg.has("probe_seeds")) {
        std::vector<std::uint64_t> seeds;
        for (double s : ex.cfg.get_list("probe_seeds", {})) seeds.push_back(static_cast<std::uint64_t>(s));
        UniquenessReport ur = uniqueness_probe(pb, ex.scfg, seeds);
        res["uniqueness"] = {{"alpha_spread", checked_value(ur.alpha_spread, 10 * ex.scfg.tol, ur.pass)},
                             {"v_spread_sup", ur.v_spread_sup}};
        pass = pass && ur.pass;
    }
    if (!ex.out_dir.empty() && sol.converged) {
        std::filesystem::create_directories(ex.out_dir);
        save_field_binary(sol.v, ex.out_dir + "/corrector.pfld");
    }
    ex.emit("cell", res, pass);
    return pass ? 0 : (sol.converged ? 2 : 3);
}

int run_homogenize(Experiment& ex) {
    HbarEvaluator hbar(ex.op, ex.f, ex.grid, ex.scfg);
    Mat A = ex.A();
    double alpha = hbar(A);
    Json res;
    res["inputs"] = input_hashes(ex);
    res["alpha"] = alpha;
    bool pass = true;
    if (ex.op.kind() == EllipticOperator::Kind::Linear) {
        InvariantMeasure im = invariant_measure(ex.op, ex.grid, ex.scfg.dirset);
        LinearFormulaResult lf = hbar_linear_formula(ex.op, ex.f, A, im);
        double rel = std::abs(alpha - lf.value) / std::max(1.0, std::abs(alpha));
        double xtol = ex.cfg.get_double("xcheck_tol", 1e-3);
        res["linear_formula"] = lf.value;
        res["cross_check_rel"] = checked_value(rel, xtol, rel <= xtol);
        res["measure_mean_err"] = checked_value(std::abs(mean(im.m) - 1.0), 1e-12,
                                                std::abs(mean(im.m) - 1.0) <= 1e-12);
        res["measure_min"] = im.positivity_min;
        res["measure_sigma2"] = im.sigma2_estimate;
        Vec qev = sym_eigenvalues(lf.Q);
        res["Q_min_eig"] = qev.minCoeff();
        pass = rel <= xtol && std::abs(mean(im.m) - 1.0) <= 1e-12 && im.positivity_min > 0 &&
               qev.minCoeff() > 0;
    }
    ex.emit("homogenize", res, pass);
    return pass ? 0 : 2;
}

int run_ellipticity(Experiment& ex) {
    int samples = ex.cfg.get_int("samples", 50);
    EllipticityReport opr = check_uniform_ellipticity(ex.op, samples, ex.seed);
    HbarEvaluator hbar(ex.op, ex.f, ex.grid, ex.scfg);
    HbarPropertyReport hr =
        check_hbar_ellipticity(hbar, samples, ex.seed + 1, ex.cfg.get_double("slack", -1));
    Json res;
    res["inputs"] = input_hashes(ex);
    res["operator_sandwich"] = {{"pass", opr.pass},
                                {"worst_lower_margin", opr.worst_lower_margin},
                                {"worst_upper_margin", opr.worst_upper_margin}};
    if (!opr.witness.empty()) res["operator_sandwich"]["witness"] = opr.witness;
    res["hbar_sandwich"] = {{"pass", hr.pass},
                            {"slack", hr.slack},
                            {"worst_lower_margin", hr.worst_lower_margin},
                            {"worst_upper_margin", hr.worst_upper_margin}};
    if (!hr.witness.empty()) res["hbar_sandwich"]["witness"] = hr.witness;
    bool pass = opr.pass && hr.pass;
    ex.emit("ellipticity", res, pass);
    return pass ? 0 : 2;
}

int run_concavity(Experiment& ex) {
    int samples = ex.cfg.get_int("samples", 50);
    HbarEvaluator hbar(ex.op, ex.f, ex.grid, ex.scfg);
    HbarPropertyReport hr =
        check_hbar_concavity(hbar, samples, ex.seed + 2, ex.cfg.get_double("slack", -1));
    Json res;
    res["inputs"] = input_hashes(ex);
    res["hbar_concavity"] = {{"pass", hr.pass},
                             {"slack", hr.slack},
                             {"worst_margin", hr.worst_lower_margin}};
    if (!hr.witness.empty()) res["hbar_concavity"]["witness"] = hr.witness;
    ex.emit("concavity", res, hr.pass);
    return hr.pass ? 0 : 2;
}

int run_recession(Experiment& ex) {
    HbarEvaluator hbar(ex.op, ex.f, ex.grid, ex.scfg);
    double target = ex.cfg.get_double("target", mean(ex.f));
    RecessionRoot rr = recession_root(hbar, target, ex.cfg.get_double("bracket_lo", -1),
                                      ex.cfg.get_double("bracket_hi", 1),
                                      ex.cfg.get_double("root_tol", 1e-8));
    // finite-difference slope of t -> Fbar(tI) at 5 points around the root
    const int n = ex.n();
    Mat I = Mat::Identity(n, n);
    double slope_lo = std::numeric_limits<double>::infinity(), slope_hi = 0;
    const double dt = 0.25;
    for (int k = -2; k <= 2; ++k) {
        double t = rr.t + k * dt;
        double s = (hbar((t + dt) * I) - hbar(t * I)) / dt;
        slope_lo = std::min(slope_lo, s);
        slope_hi = std::max(slope_hi, s);
    }
    double slack = 1e-6 + 10 * ex.scfg.tol;
    bool slope_ok = slope_lo >= n * ex.op.lambda() - slack && slope_hi <= n * ex.op.Lambda() + slack;
    Json res;
    res["t"] = rr.t;
    res["value"] = checked_value(rr.value, ex.cfg.get_double("root_tol", 1e-8),
                                 std::abs(rr.value - target) <= ex.cfg.get_double("root_tol", 1e-8));
    res["target"] = target;
    res["evaluations"] = rr.evaluations;
    res["slope_range"] = {{"min", slope_lo}, {"max", slope_hi},
                          {"bounds", {n * ex.op.lambda(), n * ex.op.Lambda()}},
                          {"pass", slope_ok}};
    ex.emit("recession", res, slope_ok);
    return slope_ok ? 0 : 2;
}

int run_liouville(Experiment& ex) {
    Mat A = ex.A();
    Vec b = ex.b();
    int half = ex.cfg.get_int("half_periods", 4);
    Decomposition dec = entire_witness(ex.op, ex.f, A, b, ex.c(), ex.grid, ex.scfg, half,
                                       ex.cfg.get_double("tol_existence", 1e-6));
    Json res;
    res["witness"] = decomposition_json(dec);
    double rtol = ex.cfg.get_double("residual_tol", 1e-6);
    bool pass = dec.residual_sup <= rtol;
    res["witness"]["residual_check"] = checked_value(dec.residual_sup, rtol, pass);

    LatticeField u = sample_box_field(witness_function(dec), ex.n(), half, ex.grid.res);
    Json bounds = Json::array();
    std::vector<LatticeVector> es;
    for (int i = 0; i < ex.n(); ++i) {
        std::vector<int> k(ex.n(), 0);
        k[i] = 1;
        es.push_back(LatticeVector(k));
    }
    if (ex.n() >= 2) {
        std::vector<int> k(ex.n(), 0);
        k[0] = k[1] = 1;
        es.push_back(LatticeVector(k));
    }
    for (const auto& e : es) {
        SecondDiffReport r = second_difference_bound(u, A, e, ex.grid.res);
        bounds.push_back({{"sup", r.sup}, {"bound", r.bound}, {"pass", r.pass},
                          {"equality_gap", r.equality_gap}});
        pass = pass && r.pass;
    }
    res["second_difference_bounds"] = bounds;

    Decomposition fit = fit_decomposition(u, ex.grid.res, ex.cfg.get_int("margin_periods", 2));
    double a_err = (fit.A - A).norm();
    double b_err = (fit.b - b).norm();
    res["round_trip"] = {{"A_err", a_err}, {"b_err", b_err}, {"residual_sup", fit.residual_sup}};
    pass = pass && !fit.failed;
    ex.emit("liouville", res, pass);
    return pass ? 0 : 2;
}

int run_blowdown(Experiment& ex) {
    std::vector<double> radii = ex.cfg.get_list("radii", {2, 4, 8, 16});
    BlowDownRun run = run_blowdown(ex.op, ex.f, ex.A(), ex.b(), ex.c(), radii, ex.scfg);
    double dflt_bound = ex.b().norm() > 0 ? -0.9 : -1.8;
    double bound = ex.cfg.get_double("order_bound", dflt_bound);
    bool pass = run.curve.degenerate || run.curve.fitted_order <= bound;
    Json res;
    res["witness"] = decomposition_json(run.witness);
    res["fitted_order"] = checked_value(run.curve.fitted_order, bound, pass);
    res["degenerate"] = run.curve.degenerate;
    if (!ex.out_dir.empty()) {
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < run.curve.radii.size(); ++i)
            rows.push_back({run.curve.radii[i], run.curve.sup_error[i]});
        write_csv(ex.out_dir, "blowdown.csv", {"R", "sup_error"}, rows);
    }
    ex.emit("blowdown", res, pass);
    return pass ? 0 : 2;
}

Json decay_json(const DecayFit& fit, double slope_slack) {
    Json j;
    j["slope"] = fit.slope;
    j["exponent_bound"] = fit.bound;
    j["slack"] = slope_slack;
    j["pass"] = fit.pass;
    j["degenerate"] = fit.degenerate;
    j["boundedness_only"] = fit.boundedness_only;
    j["max_abs"] = fit.max_abs;
    j["shells_used"] = fit.radii_used;
    return j;
}

int run_exterior_cmd(Experiment& ex, bool decay_mode) {
    double r_in = ex.cfg.get_double("r_in", 1.0);
    double R_out = ex.cfg.get_double("R_out", 6.0);
    int rpc = ex.cfg.get_int("res_per_cell", ex.grid.res);
    if (rpc != ex.grid.res)
        throw ConfigError("res_per_cell must equal res (one lattice for cell and annulus)");
    double phi_const = ex.cfg.get_double("phi_const", 1.0);
    ScalarFn phi = [phi_const](const Vec&) { return phi_const; };
    std::vector<double> radii =
        ex.cfg.get_list("radii", {1.25 * r_in, 1.5 * r_in, 1.75 * r_in, 2 * r_in, 2.5 * r_in, 3 * r_in});
    double slope_slack = ex.cfg.get_double("slope_slack", 0.2);

    ExteriorRun run = run_exterior(ex.op, ex.f, ex.A(), ex.b(), ex.c(), r_in, R_out, rpc, phi,
                                   radii, ex.scfg, slope_slack);
    Json res;
    res["farfield"] = decomposition_json(run.farfield);
    res["solver"] = {{"residual_sup", run.sol.residual_sup},
                     {"policy_sweeps", run.sol.policy_sweeps},
                     {"krylov_iterations", run.sol.krylov_iterations},
                     {"active_nodes", run.sol.u.lat->active_count()}};
    res["sandwich"] = {{"Cbar", run.sandwich.Cbar},
                       {"worst_violation", run.sandwich.worst_violation},
                       {"pass", run.sandwich.pass}};
    res["decay"] = decay_json(run.fit, slope_slack);
    bool pass = run.sandwich.pass && (!decay_mode || run.fit.pass);
    if (!ex.out_dir.empty()) {
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < run.fit.radii.size(); ++i)
            rows.push_back({run.fit.radii[i], run.fit.max_err[i]});
        write_csv(ex.out_dir, "decay.csv", {"r", "max_abs_error"}, rows);
    }
    ex.emit(decay_mode ? "decay" : "exterior", res, pass);
    return pass ? 0 : 2;
}

int run_oscillation(Experiment& ex) {
    Vec x0 = ex.cfg.get_vector("x0", Vec::Zero(ex.n()));
    std::vector<double> radii = ex.cfg.get_list("radii", {0.25, 0.5, 1.0, 2.0});
    OscillationReport rep =
        oscillation_norms(ex.op, x0, radii, ex.cfg.get_int("quad_res", 64),
                          default_probes(ex.n(), ex.cfg.get_int("probes", 8), ex.seed));
    Json res;
    res["exact"] = rep.exact;
    res["radii"] = rep.radii;
    res["local_norms"] = rep.local_norms;
    res["holder_fit"] = {{"C", rep.holder_C}, {"alpha", rep.holder_alpha},
                         {"degenerate", rep.holder_degenerate}};
    bool pass = true;
    if (ex.cfg.has("beta0")) {
        double beta0 = ex.cfg.get_double("beta0", 0);
        double worst = 0;
        for (double v : rep.local_norms) worst = std::max(worst, v);
        pass = worst <= beta0;
        res["beta0_check"] = checked_value(worst, beta0, pass);
    }
    if (!ex.out_dir.empty()) {
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < rep.radii.size(); ++i)
            rows.push_back({rep.radii[i], rep.local_norms[i]});
        write_csv(ex.out_dir, "oscillation.csv", {"r", "local_norm"}, rows);
    }
    ex.emit("oscillation", res, pass);
    return pass ? 0 : 2;
}

int run_presets(const Config& cfg, const std::string& out_dir) {
    Json res = preset_catalog();
    Json rep = build_report("presets", cfg, res);
    std::cout << rep.dump(2) << std::endl;
    if (!out_dir.empty()) write_report(rep, out_dir);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"periodic homogenization workbench for fully nonlinear elliptic equations"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::vector<std::string> overrides;

    const std::vector<std::string> names = {"cell",     "homogenize", "ellipticity", "concavity",
                                            "recession", "liouville", "blowdown",   "exterior",
                                            "decay",    "oscillation", "presets"};
    for (const auto& name : names) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "experiment config file (key = value lines)");
        sub->add_option("--set", overrides, "override config entries (key=value)")->take_all();
        sub->add_option("--out", out_dir, "output directory for report.json and CSV curves");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 4;
    }

    const std::string sub = app.get_subcommands().front()->get_name();
    try {
        Config cfg;
        if (!config_path.empty()) cfg = Config::from_file(config_path);
        for (const auto& o : overrides) cfg.set(o);
        if (sub == "presets") return run_presets(cfg, out_dir);
        // exterior-domain runs live on fine annulus lattices; their defaults
        // are the three-dimensional Laplacian at lattice spacing 1/8
        int default_res = 64;
        if (sub == "exterior" || sub == "decay") {
            default_res = 8;
            if (!cfg.has("op")) cfg.set("op=laplace3d");
        }
        Experiment ex(std::move(cfg), out_dir, default_res);
        if (sub == "cell") return run_cell(ex);
        if (sub == "homogenize") return run_homogenize(ex);
        if (sub == "ellipticity") return run_ellipticity(ex);
        if (sub == "concavity") return run_concavity(ex);
        if (sub == "recession") return run_recession(ex);
        if (sub == "liouville") return run_liouville(ex);
        if (sub == "blowdown") return run_blowdown(ex);
        if (sub == "exterior") return run_exterior_cmd(ex, false);
        if (sub == "decay") return run_exterior_cmd(ex, true);
        if (sub == "oscillation") return run_oscillation(ex);
        throw perhom::ConfigError("unknown subcommand: " + sub);
    } catch (const perhom::ConfigError& e) {
        std::cerr << "config error: " << e.what() << std::endl;
        return 4;
    } catch (const perhom::PropertyError& e) {
        std::cerr << "property failure: " << e.what() << std::endl;
        return 2;
    } catch (const perhom::SolverError& e) {
        std::cerr << "solver failure: " << e.what() << std::endl;
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 3;
    }
}
