#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

namespace depkit {

inline constexpr const char* kToolVersion = "0.1.0";

/// Result record shared by all CLI commands. The payload section is fully
/// deterministic for fixed inputs and seed; timestamps live outside it.
struct AnalysisReport {
    std::string subcommand;
    std::string gsn_tag; // Sn1, Sn2, Sn6, Sn8, Sn9 or Sn10
    std::map<std::string, std::string> inputs; // path -> content fingerprint
    nlohmann::json payload;
};

nlohmann::json report_json(const AnalysisReport& report);

/// Serialize and write atomically (temp file + rename).
void write_report(const std::filesystem::path& path, const AnalysisReport& report);

} // namespace depkit
