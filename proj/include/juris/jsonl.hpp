#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace juris::jsonl {

/// One parsed line plus its 1-based line number. Blank lines are skipped.
struct Line {
    std::size_t number = 0;
    nlohmann::json value;
};

/// Reads a JSON-lines file. Throws Error(ParseError) naming the offending line.
std::vector<Line> read(const std::filesystem::path& path);

/// Writes each value with dump() on its own line; replaces the file atomically.
void write(const std::filesystem::path& path, const std::vector<nlohmann::ordered_json>& rows);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace juris::jsonl
