#pragma once

// Machine-readable experiment reports: JSON with a config echo, a results
// map, and provenance.  The result hash covers config + results only (not
// the timestamp), so identical seeded runs produce identical hashes.

#include "perhom/config.hpp"
#include "perhom/numerics.hpp"

#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace perhom {

inline const char* kVersion = "0.1.0";

using Json = nlohmann::json;

/// A numeric result together with the tolerance it was checked against.
inline Json checked_value(double value, double tol, bool pass) {
    return Json{{"value", value}, {"tol", tol}, {"pass", pass}};
}

inline std::string timestamp_utc() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline Json build_report(const std::string& subcommand, const Config& cfg, Json results) {
    Json config_echo = Json::object();
    for (const auto& [k, v] : cfg.entries()) config_echo[k] = v;
    Json rep;
    rep["subcommand"] = subcommand;
    rep["config"] = config_echo;
    rep["results"] = std::move(results);
    Json hashed{{"config", rep["config"]}, {"results", rep["results"]}};
    rep["provenance"] = {
        {"version", kVersion},
        {"timestamp", timestamp_utc()},
        {"config_hash", fnv1a(cfg.canonical())},
        {"result_hash", fnv1a(hashed.dump())},
    };
    return rep;
}

inline void write_report(const Json& rep, const std::string& out_dir,
                         const std::string& name = "report.json") {
    std::filesystem::create_directories(out_dir);
    std::ofstream os(std::filesystem::path(out_dir) / name);
    if (!os) throw ConfigError("cannot write report to " + out_dir);
    os << rep.dump(2) << "\n";
}

inline void write_csv(const std::string& out_dir, const std::string& name,
                      const std::vector<std::string>& columns,
                      const std::vector<std::vector<double>>& rows) {
    std::filesystem::create_directories(out_dir);
    std::ofstream os(std::filesystem::path(out_dir) / name);
    if (!os) throw ConfigError("cannot write csv to " + out_dir);
    for (std::size_t c = 0; c < columns.size(); ++c)
        os << columns[c] << (c + 1 < columns.size() ? "," : "\n");
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c)
            os << format_double(row[c]) << (c + 1 < row.size() ? "," : "\n");
    }
}

}  // namespace perhom
