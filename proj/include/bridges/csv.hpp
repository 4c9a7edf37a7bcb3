#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace bridges::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index of `name`, or nullopt.
    std::optional<std::size_t> column(std::string_view name) const;
};

/// RFC-4180-ish reader: comma separated, double-quoted fields may contain
/// commas, quotes ("") and newlines. A trailing empty line is ignored.
Table parse(std::string_view text);
Table read_file(const std::filesystem::path& path);

std::string escape(std::string_view field);
void write_row(std::ostream& os, const std::vector<std::string>& fields);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_number(double value);
std::string format_optional(const std::optional<double>& value);

/// Strict decimal parse of a whole field (surrounding spaces allowed).
std::optional<double> parse_number(std::string_view text);

} // namespace bridges::csv
