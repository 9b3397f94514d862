#include "depkit/jsonutil.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "depkit/errors.hpp"

namespace depkit {

const char* error_kind(const Error& e) {
    if (dynamic_cast<const MalformedModel*>(&e)) return "MalformedModel";
    if (dynamic_cast<const MalformedInput*>(&e)) return "MalformedInput";
    if (dynamic_cast<const DimensionMismatch*>(&e)) return "DimensionMismatch";
    if (dynamic_cast<const NonFiniteWeight*>(&e)) return "NonFiniteWeight";
    if (dynamic_cast<const LabelOutOfRange*>(&e)) return "LabelOutOfRange";
    if (dynamic_cast<const KOutOfRange*>(&e)) return "KOutOfRange";
    if (dynamic_cast<const InvalidItem*>(&e)) return "InvalidItem";
    if (dynamic_cast<const NoFeasibleAssignment*>(&e)) return "NoFeasibleAssignment";
    if (dynamic_cast<const EmptyDomain*>(&e)) return "EmptyDomain";
    if (dynamic_cast<const LayerNotMonitorable*>(&e)) return "LayerNotMonitorable";
    if (dynamic_cast<const BadParameters*>(&e)) return "BadParameters";
    if (dynamic_cast<const EmptyDataset*>(&e)) return "EmptyDataset";
    return "Error";
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MalformedInput("cannot open file: " + path.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw MalformedInput("invalid JSON in " + path.string());
    return j;
}

void require_format(const nlohmann::json& j, const std::string& context) {
    if (!j.is_object() || !j.contains("format") || !j["format"].is_string() ||
        j["format"].get<std::string>() != kFormatTag) {
        throw MalformedInput(context + ": missing or unsupported \"format\" (expected \"" +
                             std::string(kFormatTag) + "\")");
    }
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string file_fingerprint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MalformedInput("cannot open file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string s = buf.str();
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(s)));
    return out;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::path dir = path.parent_path();
    if (dir.empty()) dir = ".";
    std::filesystem::path tmp = dir / (path.filename().string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << text;
        out.flush();
        if (!out) throw Error("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

} // namespace depkit
