#include "depkit/report.hpp"

#include <chrono>
#include <ctime>

#include "depkit/jsonutil.hpp"

namespace depkit {

namespace {

std::string utc_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace

nlohmann::json report_json(const AnalysisReport& report) {
    nlohmann::json j;
    j["format"] = kFormatTag;
    j["tool_version"] = kToolVersion;
    j["subcommand"] = report.subcommand;
    j["gsn_tag"] = report.gsn_tag;
    j["inputs"] = report.inputs;
    j["payload"] = report.payload;
    j["generated_at"] = utc_now();
    return j;
}

void write_report(const std::filesystem::path& path, const AnalysisReport& report) {
    write_text_atomic(path, report_json(report).dump(2) + "\n");
}

} // namespace depkit
