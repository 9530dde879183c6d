#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace credlens::csv {

using Row = std::vector<std::string>;

/// RFC 4180 style reader: comma separated, double-quote escaping, LF or CRLF.
/// Blank lines are skipped. Each row carries its 1-based source line number.
struct Table {
    Row header;
    std::vector<Row> rows;
    std::vector<std::size_t> lineNumbers;

    /// Index of a header column, or throws credlens::Error naming it.
    std::size_t column(std::string_view name) const;
};

Table parse(std::string_view text);
Table readFile(const std::filesystem::path& path);

std::string escapeField(std::string_view field);
std::string formatRow(const Row& row);

}  // namespace credlens::csv
