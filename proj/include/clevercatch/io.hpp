// clevercatch/io.hpp
// CSV tokenizing, number parsing/formatting and file helpers.
#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "clevercatch/error.hpp"
#include "clevercatch/rng.hpp"

namespace clevercatch {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_csv(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.emplace_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (quoted) throw ParseError("unterminated quoted field");
    fields.emplace_back(trim(cur));
    return fields;
}

inline std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

inline double parse_double(std::string_view text, const std::string& context) {
    text = trim(text);
    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (!text.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (text.empty() || ec != std::errc() || ptr != last)
        throw ParseError(context + ": malformed number '" + std::string(text) + "'");
    return value;
}

inline std::int64_t parse_int(std::string_view text, const std::string& context) {
    text = trim(text);
    std::int64_t value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
        throw ParseError(context + ": malformed integer '" + std::string(text) + "'");
    return value;
}

// 17 significant digits: exact round trip for every finite double.
// Shortest text that parses back to the same double.
inline std::string format_double(double x) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

// Reads all non-blank lines of a CSV file, checking the header.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  // 1-based source line for each row
};

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline CsvTable parse_csv_text(const std::string& text, const std::string& source,
                               const std::vector<std::string>& expected_header, bool allow_extra_columns = false) {
    CsvTable table;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        std::vector<std::string> fields;
        try {
            fields = split_csv(t);
        } catch (const ParseError& e) {
            throw ParseError(source + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!have_header) {
            have_header = true;
            table.header = fields;
            const bool ok = allow_extra_columns
                                ? fields.size() >= expected_header.size() &&
                                      std::equal(expected_header.begin(), expected_header.end(), fields.begin())
                                : fields == expected_header;
            if (!expected_header.empty() && !ok) {
                std::string want;
                for (const auto& h : expected_header) want += (want.empty() ? "" : ",") + h;
                throw ParseError(source + ":" + std::to_string(line_no) + ": expected header '" + want + "'");
            }
            continue;
        }
        if (fields.size() != table.header.size())
            throw ParseError(source + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(table.header.size()) + " fields, got " + std::to_string(fields.size()));
        table.rows.push_back(std::move(fields));
        table.line_numbers.push_back(line_no);
    }
    if (!have_header) throw ParseError(source + ": missing header");
    return table;
}

inline CsvTable read_csv(const std::filesystem::path& path, const std::vector<std::string>& expected_header,
                         bool allow_extra_columns = false) {
    return parse_csv_text(read_text(path), path.string(), expected_header, allow_extra_columns);
}

// Writes via a temporary sibling and rename, so readers never see a partial file.
inline void write_text_atomic(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + tmp.string() + "'");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("short write to '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename '" + tmp.string() + "': " + ec.message());
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string content_hash(std::string_view bytes) { return hex64(fnv1a64(bytes)); }

inline std::string file_hash(const std::filesystem::path& path) { return content_hash(read_text(path)); }

}  // namespace clevercatch
