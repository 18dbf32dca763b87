#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace wbforge {

// Write to a sibling temp file, then rename over the target, so readers see
// either the old or the new content.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_text(const std::filesystem::path& path);

// One JSON value per non-empty line. Throws SchemaError naming the line on malformed input.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
void write_jsonl_atomic(const std::filesystem::path& path, const std::vector<nlohmann::json>& records);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& doc);

} // namespace wbforge
