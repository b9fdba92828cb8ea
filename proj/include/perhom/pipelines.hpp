#pragma once

// End-to-end experiment pipelines shared by the CLI and the acceptance
// suite: far-field construction -> exterior solve -> sandwich and decay
// diagnostics, and the witness/blow-down/round-trip chains.

#include "perhom/exterior.hpp"
#include "perhom/hbar.hpp"
#include "perhom/liouville.hpp"

namespace perhom {

struct ExteriorRun {
    Decomposition farfield;
    DirichletResult sol;
    SandwichReport sandwich;
    DecayFit fit;
    double Cbar = 0;
};

/// Full exterior experiment: validate the far field through entire_witness,
/// solve on the annulus, check the comparison sandwich with the measured
/// inner mismatch, and fit the radial decay of u - w.
inline ExteriorRun run_exterior(const EllipticOperator& op, const TorusField& f_cell,
                                const Mat& A, const Vec& b, double c, double r_in, double R_out,
                                int res_per_cell, const ScalarFn& phi,
                                const std::vector<double>& radii, const SolverConfig& cfg,
                                double slope_slack = 0.2, double sandwich_slack = 1e-6) {
    ExteriorRun run;
    run.farfield = entire_witness(op, f_cell, A, b, c, f_cell.grid, cfg, 2);

    AnnulusProblem pb{op, f_cell, r_in, r_in, R_out, res_per_cell, phi, run.farfield};
    run.Cbar = inner_mismatch(pb);
    run.sol = exterior_solve(pb, cfg);
    if (!run.sol.converged)
        throw SolverError("exterior solve did not converge: residual " +
                          format_double(run.sol.residual_sup));

    ScalarFn w = witness_function(run.farfield);
    run.sandwich = check_comparison_sandwich(run.sol.u, w, run.Cbar,
                                             sandwich_slack + 10 * run.sol.residual_sup);
    run.fit = decay_fit(run.sol.u, w, radii, op.lambda(), op.Lambda(), slope_slack);
    return run;
}

struct BlowDownRun {
    Decomposition witness;
    BlowDownCurve curve;
};

/// Construct an entire witness and measure its blow-down curve on a box
/// covering the largest requested radius.
inline BlowDownRun run_blowdown(const EllipticOperator& op, const TorusField& f, const Mat& A,
                                const Vec& b, double c, const std::vector<double>& radii,
                                const SolverConfig& cfg) {
    BlowDownRun run;
    run.witness = entire_witness(op, f, A, b, c, f.grid, cfg, 2);
    double rmax = 0;
    for (double r : radii) rmax = std::max(rmax, r);
    int half = static_cast<int>(std::ceil(rmax));
    run.curve = blow_down(
        sample_box_field(witness_function(run.witness), op.dim(), half, f.grid.res), radii, A);
    return run;
}

}  // namespace perhom
