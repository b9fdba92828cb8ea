#pragma once

// Experiment configuration: a flat key = value text file plus command-line
// overrides.  '#' starts a comment; whitespace around keys and values is
// trimmed.  Matrices are written row-major with ';' between rows, vectors
// and lists comma-separated.

#include "perhom/cell.hpp"
#include "perhom/numerics.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace perhom {

class Config {
public:
    Config() = default;

    static Config from_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw ConfigError("cannot open config file: " + path);
        Config cfg;
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            std::string t = trim(line);
            if (t.empty()) continue;
            auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
            std::string key = trim(t.substr(0, eq));
            std::string val = trim(t.substr(eq + 1));
            if (key.empty())
                throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
            cfg.kv_[key] = val;
        }
        return cfg;
    }

    void set(const std::string& assignment) {
        auto eq = assignment.find('=');
        if (eq == std::string::npos) throw ConfigError("override must be key=value: " + assignment);
        kv_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
    }

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string get(const std::string& key, const std::string& dflt) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? dflt : it->second;
    }
    std::string require(const std::string& key) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) throw ConfigError("missing required config key: " + key);
        return it->second;
    }

    double get_double(const std::string& key, double dflt) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        return parse_double(key, it->second);
    }
    int get_int(const std::string& key, int dflt) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        try {
            return std::stoi(it->second);
        } catch (...) {
            throw ConfigError("config key '" + key + "': not an integer: " + it->second);
        }
    }
    std::uint64_t get_seed(const std::string& key, std::uint64_t dflt) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        try {
            return std::stoull(it->second);
        } catch (...) {
            throw ConfigError("config key '" + key + "': not a seed: " + it->second);
        }
    }

    Vec get_vector(const std::string& key, const Vec& dflt) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        std::vector<double> vals = parse_list(key, it->second);
        Vec v(static_cast<Eigen::Index>(vals.size()));
        for (std::size_t i = 0; i < vals.size(); ++i) v(static_cast<Eigen::Index>(i)) = vals[i];
        return v;
    }

    std::vector<double> get_list(const std::string& key, const std::vector<double>& dflt) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? dflt : parse_list(key, it->second);
    }

    /// Matrix literal "a,b;c,d" (row-major, ';' rows); must be square.
    Mat get_matrix(const std::string& key, const Mat& dflt) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        std::vector<std::vector<double>> rows;
        std::stringstream ss(it->second);
        std::string row;
        while (std::getline(ss, row, ';')) rows.push_back(parse_list(key, row));
        const auto n = rows.size();
        Mat M(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            if (rows[i].size() != n)
                throw ConfigError("config key '" + key + "': matrix is not square");
            for (std::size_t j = 0; j < n; ++j) M(i, j) = rows[i][j];
        }
        return M;
    }

    SolverConfig solver_config() const {
        SolverConfig sc;
        sc.tol = get_double("tol", sc.tol);
        sc.max_iters = get_int("max_iters", sc.max_iters);
        sc.dirset = get("dirset", sc.dirset);
        sc.linsolver = get("linsolver", sc.linsolver);
        sc.lin_tol = get_double("lin_tol", sc.lin_tol);
        sc.lin_maxit = get_int("lin_maxit", sc.lin_maxit);
        return sc;
    }

    const std::map<std::string, std::string>& entries() const { return kv_; }

    std::string canonical() const {
        std::string s;
        for (const auto& [k, v] : kv_) s += k + "=" + v + "\n";
        return s;
    }

private:
    static std::string trim(const std::string& s) {
        auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }
    static double parse_double(const std::string& key, const std::string& v) {
        try {
            std::size_t pos = 0;
            double d = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return d;
        } catch (...) {
            throw ConfigError("config key '" + key + "': not a number: " + v);
        }
    }
    static std::vector<double> parse_list(const std::string& key, const std::string& v) {
        std::vector<double> out;
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
        return out;
    }

    std::map<std::string, std::string> kv_;
};

}  // namespace perhom
