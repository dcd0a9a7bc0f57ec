#pragma once

#include <charconv>
#include <string>
#include <vector>

namespace insider {

// Shortest round-trip decimal form; deterministic for a given double, which is
// what keeps repeated runs byte-identical at the file level.
std::string format_double(double v);

std::string read_file(const std::string& path);  // throws ConfigError

// Write via a temp file in the same directory followed by rename, so an
// interrupted run never leaves a partial artifact behind.
void write_file_atomic(const std::string& path, const std::string& content);

// Minimal CSV (RFC 4180 subset): fields quoted only when needed, quotes
// doubled inside quoted fields.
std::string csv_escape(const std::string& field);
std::vector<std::string> csv_split_line(const std::string& line);

}  // namespace insider
