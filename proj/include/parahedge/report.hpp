#ifndef PARAHEDGE_REPORT_HPP
#define PARAHEDGE_REPORT_HPP

#include "parahedge/common.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace parahedge {

using json = nlohmann::ordered_json;

/// Outcome of one named check. TOLERANCE marks a finite measurement outside
/// its tolerance (a mathematical violation); ERROR is reserved for
/// infrastructure failures (exceptions, non-finite values).
enum class CheckStatus { Pass, Tolerance, Skip, Error };

inline const char* to_string(CheckStatus s) {
    switch (s) {
        case CheckStatus::Pass: return "PASS";
        case CheckStatus::Tolerance: return "TOLERANCE";
        case CheckStatus::Skip: return "SKIP";
        case CheckStatus::Error: return "ERROR";
    }
    return "ERROR";
}

struct CheckRecord {
    std::string id;       // stable name of the identity/bound being checked
    CheckStatus status = CheckStatus::Pass;
    double measured = 0.0;
    double tolerance = 0.0;
    json details;

    json to_json() const {
        json j;
        j["id"] = id;
        j["status"] = to_string(status);
        j["measured"] = measured;
        j["tolerance"] = tolerance;
        if (!details.is_null()) j["details"] = details;
        return j;
    }
};

/// Classify a magnitude against its tolerance; NaN/inf lands in ERROR.
inline CheckRecord make_check(const std::string& id, double measured, double tolerance,
                              json details = {}) {
    CheckRecord r;
    r.id = id;
    r.measured = measured;
    r.tolerance = tolerance;
    r.details = std::move(details);
    if (!std::isfinite(measured))
        r.status = CheckStatus::Error;
    else
        r.status = measured <= tolerance ? CheckStatus::Pass : CheckStatus::Tolerance;
    return r;
}

constexpr const char* tool_version = "parahedge 0.1.0";

/// Deterministic run report: identical config + seed produce byte-identical
/// JSON, so no wall-clock data lives here (timing goes to the console log).
struct RunReport {
    json config;  // fully materialized, defaults included
    std::uint64_t config_hash = 0;
    std::string experiment;
    std::vector<CheckRecord> records;
    json payload;  // experiment-specific numbers (estimates, constants, ...)

    bool any_violation() const {
        for (const auto& r : records)
            if (r.status == CheckStatus::Tolerance) return true;
        return false;
    }
    bool any_error() const {
        for (const auto& r : records)
            if (r.status == CheckStatus::Error) return true;
        return false;
    }
    int exit_code() const { return any_error() ? 1 : (any_violation() ? 2 : 0); }

    json to_json() const {
        json j;
        j["tool"] = tool_version;
        j["experiment"] = experiment;
        j["config_hash"] = config_hash;
        j["config"] = config;
        json recs = json::array();
        for (const auto& r : records) recs.push_back(r.to_json());
        j["records"] = recs;
        if (!payload.is_null()) j["results"] = payload;
        return j;
    }

    void write(const std::filesystem::path& dir) const {
        std::filesystem::create_directories(dir);
        std::ofstream out(dir / "report.json");
        out << to_json().dump(2) << "\n";
    }
};

inline std::uint64_t fnv1a_hash(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace parahedge

#endif
