#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace lesiontl::csv {

using Row = std::vector<std::string>;

/// Quotes a field only when it contains a comma, quote, or line break.
std::string escape(std::string_view field);
std::string join(const Row& row);

/// Parses LF/CRLF separated CSV with RFC 4180 quoting.
std::vector<Row> parse(std::string_view text);

/// Writes header + rows with LF line endings.
void write(const std::filesystem::path& path, const Row& header, const std::vector<Row>& rows);
std::vector<Row> read(const std::filesystem::path& path);

/// Shortest round-trip decimal rendering of a double.
std::string format_real(double value);

}  // namespace lesiontl::csv
