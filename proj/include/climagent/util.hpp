#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace climagent {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string sha256_hex(std::string_view bytes);
std::uint64_t fnv1a64(std::string_view bytes);

// Throws Error(parse_error) when the file cannot be opened.
std::string read_file(const fs::path& path);
// Writes via a temp file + rename so readers never see a torn file.
void write_file_atomic(const fs::path& path, std::string_view bytes);
void append_line(const fs::path& path, std::string_view line);

json read_json_file(const fs::path& path);
void write_json_file(const fs::path& path, const json& value);

// One JSON value per non-blank line; `line_no` in errors is 1-based.
std::vector<json> read_json_lines(const fs::path& path);

std::string now_iso8601();

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool contains(std::string_view haystack, std::string_view needle);

// Returns the body of the first ``` fenced block whose info string is one of
// `langs` (any fence when `langs` is empty).
std::optional<std::string> extract_fenced(std::string_view text,
                                          const std::vector<std::string>& langs = {});

// Path `p` lies inside directory `root` after lexical normalization and
// symlink resolution of existing components.
bool path_within(const fs::path& root, const fs::path& p);

}  // namespace climagent
