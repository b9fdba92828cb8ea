#pragma once

// Named operator and datum families, the preset catalog, and the JSON
// operator-description loader.  Preset spec strings look like
//   laplace | osc2d | bellman2d(branches=3,seed=7) | pucci_plus(lambda=1,Lambda=2,n=2)
// or "file:<path>" for a JSON operator description referencing coefficient
// field files.

#include "perhom/operators.hpp"
#include "perhom/torus.hpp"

#include <json.hpp>

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace perhom {

struct PresetSpec {
    std::string name;
    std::map<std::string, std::string> params;

    double get(const std::string& key, double dflt) const {
        auto it = params.find(key);
        return it == params.end() ? dflt : std::stod(it->second);
    }
    int geti(const std::string& key, int dflt) const {
        auto it = params.find(key);
        return it == params.end() ? dflt : std::stoi(it->second);
    }

    static PresetSpec parse(const std::string& s) {
        PresetSpec ps;
        auto lp = s.find('(');
        if (lp == std::string::npos) {
            ps.name = s;
            return ps;
        }
        ps.name = s.substr(0, lp);
        auto rp = s.rfind(')');
        if (rp == std::string::npos || rp < lp) throw ConfigError("bad preset spec: " + s);
        std::stringstream body(s.substr(lp + 1, rp - lp - 1));
        std::string item;
        while (std::getline(body, item, ',')) {
            auto eq = item.find('=');
            if (eq == std::string::npos) throw ConfigError("bad preset parameter: " + item);
            ps.params[item.substr(0, eq)] = item.substr(eq + 1);
        }
        return ps;
    }

    std::string canonical() const {
        std::string out = name;
        if (!params.empty()) {
            out += "(";
            bool first = true;
            for (const auto& [k, v] : params) {
                if (!first) out += ",";
                out += k + "=" + v;
                first = false;
            }
            out += ")";
        }
        return out;
    }
};

namespace detail {

/// Random Bellman branches: periodic, smooth, diagonally dominant by
/// construction so the face-diagonal stencil decomposition always applies.
inline std::vector<CoeffMatrix> random_bellman_branches(int n, int count, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<CoeffMatrix> branches;
    for (int b = 0; b < count; ++b) {
        CoeffMatrix cm;
        cm.n = n;
        // diagonal: base + small trig per axis; off-diagonal: small trig
        std::vector<double> base(n), damp(n), dphase(n);
        for (int i = 0; i < n; ++i) {
            base[i] = rng.uniform(1.6, 2.4);
            damp[i] = rng.uniform(0.05, 0.3);
            dphase[i] = rng.uniform(0, 1);
        }
        struct Off {
            double amp, phase;
            int axis;
        };
        std::vector<std::vector<Off>> off(n, std::vector<Off>(n));
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                off[i][j] = {rng.uniform(-0.15, 0.15), rng.uniform(0, 1), rng.uniform_int(0, n - 1)};
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                if (i == j) {
                    double c0 = base[i], am = damp[i], ph = dphase[i];
                    int ax = i;
                    cm.upper.push_back([c0, am, ph, ax](const Vec& x) {
                        return c0 + am * std::sin(2 * kPi * (x(ax) + ph));
                    });
                } else {
                    Off o = off[i][j];
                    cm.upper.push_back([o](const Vec& x) {
                        return o.amp * std::sin(2 * kPi * (x(o.axis) + o.phase));
                    });
                }
            }
        branches.push_back(std::move(cm));
    }
    return branches;
}

/// Declared ellipticity constants from eigenvalue scans at two probe
/// resolutions, rounded outward.
inline std::pair<double, double> scan_constants(const std::vector<CoeffMatrix>& branches, int n) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0;
    for (int res : {16, 32}) {
        TorusGrid g(n, res);
        for (const auto& cm : branches)
            for (std::size_t i = 0; i < g.node_count(); ++i) {
                Vec ev = sym_eigenvalues(cm.eval(g.node(i)));
                lo = std::min(lo, ev.minCoeff());
                hi = std::max(hi, ev.maxCoeff());
            }
    }
    return {lo * 0.995, hi * 1.005};
}

inline EllipticOperator load_operator_json(const nlohmann::json& j);

inline CoeffMatrix coeff_from_json(const nlohmann::json& j, int n) {
    if (j.contains("constant")) {
        Mat a(n, n);
        auto rows = j.at("constant");
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < n; ++k) a(i, k) = rows.at(i).at(k).get<double>();
        return CoeffMatrix::constant(a);
    }
    if (j.contains("entries")) {
        std::vector<TorusField> fields;
        for (const auto& path : j.at("entries")) fields.push_back(load_field(path.get<std::string>()));
        return CoeffMatrix::from_fields(fields);
    }
    throw ConfigError("operator JSON: coefficient needs 'constant' or 'entries'");
}

inline EllipticOperator load_operator_json(const nlohmann::json& j) {
    std::string variant = j.at("variant").get<std::string>();
    if (variant == "linear") {
        int n = j.at("n").get<int>();
        return EllipticOperator::linear(coeff_from_json(j, n), j.at("lambda").get<double>(),
                                        j.at("Lambda").get<double>());
    }
    if (variant == "bellman") {
        int n = j.at("n").get<int>();
        std::vector<CoeffMatrix> branches;
        for (const auto& bj : j.at("branches")) branches.push_back(coeff_from_json(bj, n));
        return EllipticOperator::bellman(std::move(branches), j.at("lambda").get<double>(),
                                         j.at("Lambda").get<double>());
    }
    if (variant == "pucci") {
        std::string sign = j.at("sign").get<std::string>();
        return EllipticOperator::pucci(j.at("n").get<int>(),
                                       sign == "minus" ? PucciSign::Minus : PucciSign::Plus,
                                       j.at("lambda").get<double>(), j.at("Lambda").get<double>());
    }
    if (variant == "shifted") {
        return EllipticOperator::shifted(load_operator_json(j.at("base")),
                                         j.at("offset").get<double>());
    }
    throw ConfigError("operator JSON: unknown variant '" + variant + "'");
}

}  // namespace detail

/// Operator from a preset spec string (see header comment) or JSON file.
inline EllipticOperator make_operator(const std::string& spec, int n_hint = 0,
                                      std::uint64_t seed_hint = 0) {
    if (spec.rfind("file:", 0) == 0) {
        std::ifstream is(spec.substr(5));
        if (!is) throw ConfigError("cannot open operator file: " + spec.substr(5));
        nlohmann::json j;
        is >> j;
        return detail::load_operator_json(j);
    }
    PresetSpec ps = PresetSpec::parse(spec);
    int n = ps.geti("n", n_hint > 0 ? n_hint : 2);
    if (ps.name == "laplace2d") n = 2;
    if (ps.name == "laplace3d") n = 3;

    if (ps.name == "laplace" || ps.name == "laplace2d" || ps.name == "laplace3d") {
        auto op = EllipticOperator::linear(CoeffMatrix::constant(Mat::Identity(n, n)), 1.0, 1.0);
        op.mark_x_independent();
        return op;
    }
    if (ps.name == "const_aniso") {
        double ratio = ps.get("ratio", 2.0);
        Mat a = Mat::Identity(n, n);
        for (int i = 0; i < n; ++i) a(i, i) = 1.0 + (ratio - 1.0) * i / std::max(1, n - 1);
        auto op = EllipticOperator::linear(CoeffMatrix::constant(a), 1.0, ratio);
        op.mark_x_independent();
        return op;
    }
    if (ps.name == "osc1d") {
        auto g = [](const Vec& x) { return 2.0 + std::sin(2 * kPi * x(0)); };
        return EllipticOperator::linear(CoeffMatrix::isotropic(1, g), 1.0, 3.0);
    }
    if (ps.name == "osc2d") {
        double amp = ps.get("amp", 0.5);
        auto g = [amp](const Vec& x) { return 1.0 + amp * std::sin(2 * kPi * x(0)); };
        return EllipticOperator::linear(CoeffMatrix::isotropic(2, g), 1.0 - amp, 1.0 + amp);
    }
    if (ps.name == "osc2d_aniso") {
        // two-dimensional coupling with mixed frequencies and phases; no
        // lattice symmetry survives, so discrete ergodic constants carry a
        // genuine O(h^2) error (unlike the separable families, where the
        // adjoint kernel is exact on every grid)
        double amp = ps.get("amp", 0.3);
        double amp2 = amp * 5.0 / 6.0;
        CoeffMatrix cm;
        cm.n = 2;
        cm.upper = {
            [amp](const Vec& x) {
                return std::exp(amp * std::sin(2 * kPi * x(0) + 0.7) * std::cos(2 * kPi * x(1) - 0.2));
            },
            [](const Vec&) { return 0.0; },
            [amp2](const Vec& x) {
                return std::exp(amp2 * std::cos(4 * kPi * x(0) + 0.5) * std::sin(2 * kPi * x(1) + 1.1));
            },
        };
        return EllipticOperator::linear(std::move(cm), 0.95 * std::exp(-amp),
                                        1.05 * std::exp(amp));
    }
    if (ps.name == "osc3d_r15") {
        auto g = [](const Vec& x) { return 1.25 + 0.25 * std::sin(2 * kPi * x(0)); };
        return EllipticOperator::linear(CoeffMatrix::isotropic(3, g), 1.0, 1.5);
    }
    if (ps.name == "bellman2d" || ps.name == "bellman") {
        int count = ps.geti("branches", 3);
        std::uint64_t seed = static_cast<std::uint64_t>(ps.geti("seed", seed_hint ? static_cast<int>(seed_hint) : 1));
        auto branches = detail::random_bellman_branches(ps.name == "bellman" ? n : 2, count, seed);
        auto [lo, hi] = detail::scan_constants(branches, ps.name == "bellman" ? n : 2);
        return EllipticOperator::bellman(std::move(branches), lo, hi);
    }
    if (ps.name == "pucci_plus" || ps.name == "pucci_minus") {
        return EllipticOperator::pucci(n, ps.name == "pucci_plus" ? PucciSign::Plus : PucciSign::Minus,
                                       ps.get("lambda", 1.0), ps.get("Lambda", 2.0));
    }
    throw ConfigError("unknown operator preset: " + ps.name);
}

/// Periodic datum from a preset spec string.
inline TorusField make_datum(const std::string& spec, const TorusGrid& grid) {
    PresetSpec ps = PresetSpec::parse(spec);
    double amp = ps.get("amp", 1.0);
    const int n = grid.dim;
    if (ps.name == "zero") return TorusField(grid, 0.0);
    if (ps.name == "sin1")
        return TorusField::sample(grid, [amp](const Vec& x) { return amp * std::sin(2 * kPi * x(0)); });
    if (ps.name == "cos1")
        return TorusField::sample(grid, [amp](const Vec& x) { return amp * std::cos(2 * kPi * x(0)); });
    if (ps.name == "cos2") {
        if (n < 2) throw ConfigError("datum cos2 needs n >= 2");
        return TorusField::sample(grid, [amp](const Vec& x) { return amp * std::cos(2 * kPi * x(1)); });
    }
    if (ps.name == "sincos") {
        if (n < 2) throw ConfigError("datum sincos needs n >= 2");
        return TorusField::sample(grid, [amp](const Vec& x) {
            return amp * std::sin(2 * kPi * x(0)) * std::cos(2 * kPi * x(1));
        });
    }
    if (ps.name.rfind("file:", 0) == 0) return load_field(ps.name.substr(5));
    throw ConfigError("unknown datum preset: " + ps.name);
}

/// Catalog of named presets with parameter documentation.
inline nlohmann::json preset_catalog() {
    nlohmann::json cat;
    cat["operators"] = nlohmann::json::array({
        {{"name", "laplace"}, {"params", "n"}, {"doc", "a = I, lambda = Lambda = 1"}},
        {{"name", "laplace2d"}, {"params", ""}, {"doc", "a = I, n = 2"}},
        {{"name", "laplace3d"}, {"params", ""}, {"doc", "a = I, n = 3"}},
        {{"name", "const_aniso"}, {"params", "n, ratio"}, {"doc", "constant diagonal, eigenvalues 1..ratio"}},
        {{"name", "osc1d"}, {"params", ""}, {"doc", "n=1, a(x) = 2 + sin 2 pi x"}},
        {{"name", "osc2d"}, {"params", "amp"}, {"doc", "n=2, a(x) = (1 + amp sin 2 pi x1) I"}},
        {{"name", "osc2d_aniso"}, {"params", "amp"}, {"doc", "n=2, a = diag(1 + amp sin 2 pi x1, 1 + amp cos 2 pi x2)"}},
        {{"name", "osc3d_r15"}, {"params", ""}, {"doc", "n=3, a(x) = (1.25 + 0.25 sin 2 pi x1) I, ratio 1.5"}},
        {{"name", "bellman2d"}, {"params", "branches, seed"}, {"doc", "n=2 random smooth diagonally-dominant Bellman minimum"}},
        {{"name", "pucci_plus"}, {"params", "n, lambda, Lambda"}, {"doc", "Pucci extremal M+"}},
        {{"name", "pucci_minus"}, {"params", "n, lambda, Lambda"}, {"doc", "Pucci extremal M-"}},
    });
    cat["datums"] = nlohmann::json::array({
        {{"name", "zero"}, {"params", ""}, {"doc", "f = 0"}},
        {{"name", "sin1"}, {"params", "amp"}, {"doc", "f = amp sin 2 pi x1"}},
        {{"name", "cos1"}, {"params", "amp"}, {"doc", "f = amp cos 2 pi x1"}},
        {{"name", "cos2"}, {"params", "amp"}, {"doc", "f = amp cos 2 pi x2"}},
        {{"name", "sincos"}, {"params", "amp"}, {"doc", "f = amp sin 2 pi x1 cos 2 pi x2"}},
    });
    return cat;
}

}  // namespace perhom
