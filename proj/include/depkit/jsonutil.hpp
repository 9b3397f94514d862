#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

namespace depkit {

inline constexpr const char* kFormatTag = "depkit/1";

/// Parse a JSON file, throwing MalformedInput with the path in the message.
nlohmann::json read_json_file(const std::filesystem::path& path);

/// Throw MalformedInput unless j carries `"format": "depkit/1"`.
void require_format(const nlohmann::json& j, const std::string& context);

/// FNV-1a 64-bit over a byte string.
std::uint64_t fnv1a64(std::string_view bytes);

/// FNV-1a 64-bit of a file's contents, rendered as 16 hex digits.
/// Reproducibility fingerprint, not a security hash.
std::string file_fingerprint(const std::filesystem::path& path);

/// Write `text` to `path` atomically (temp file in the same directory + rename).
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

} // namespace depkit
