#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace regrel {

using json = nlohmann::json;

/// Parses one JSON value per non-blank line. Errors name the source and line.
std::vector<json> parse_jsonl(std::string_view content, std::string_view source_name);
std::vector<json> read_jsonl_file(const std::filesystem::path& path);

std::string to_jsonl(const std::vector<json>& records);

std::string read_text_file(const std::filesystem::path& path);

/// Writes via a temporary sibling and rename, so readers never see a partial file.
void write_text_file_atomic(const std::filesystem::path& path, std::string_view content);

json read_json_file(const std::filesystem::path& path);

/// Reads an optional string field; null and absent both yield an empty optional.
std::optional<std::string> optional_string(const json& j, const char* key);
std::string required_string(const json& j, const char* key, std::string_view context);

}  // namespace regrel
