#include "credlens/common/csv.hpp"

#include "credlens/common/error.hpp"
#include "credlens/common/io.hpp"

namespace credlens::csv {

std::size_t Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw Error("missing column '" + std::string(name) + "'");
}

Table parse(std::string_view text) {
    Table table;
    std::vector<Row> rows;
    std::vector<std::size_t> lines;
    Row current;
    std::string field;
    bool inQuotes = false;
    bool fieldStarted = false;
    std::size_t line = 1;
    std::size_t rowLine = 1;

    auto endRow = [&] {
        if (fieldStarted || !current.empty()) {
            current.push_back(std::move(field));
            rows.push_back(std::move(current));
            lines.push_back(rowLine);
        }
        current = {};
        field.clear();
        fieldStarted = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (inQuotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    inQuotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                inQuotes = true;
                fieldStarted = true;
                break;
            case ',':
                current.push_back(std::move(field));
                field.clear();
                fieldStarted = true;
                break;
            case '\r':
                break;
            case '\n':
                endRow();
                ++line;
                rowLine = line;
                break;
            default:
                if (!fieldStarted && current.empty()) rowLine = line;
                field.push_back(c);
                fieldStarted = true;
        }
    }
    if (inQuotes) throw Error("unterminated quoted field starting near line " + std::to_string(rowLine));
    endRow();

    if (rows.empty()) return table;
    table.header = std::move(rows.front());
    table.rows.assign(std::make_move_iterator(rows.begin() + 1), std::make_move_iterator(rows.end()));
    table.lineNumbers.assign(lines.begin() + 1, lines.end());
    return table;
}

Table readFile(const std::filesystem::path& path) { return parse(readTextFile(path)); }

std::string escapeField(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string formatRow(const Row& row) {
    std::string out;
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out.push_back(',');
        out += escapeField(row[i]);
    }
    out.push_back('\n');
    return out;
}

}  // namespace credlens::csv
