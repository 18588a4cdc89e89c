#include "ccsq/csv.hpp"

#include "ccsq/errors.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace ccsq::csv {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

double parse_double(const std::string& s, const std::string& context) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last)
        throw validation_error(context + ": not a number: '" + s + "'");
    return v;
}

namespace {

std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

} // namespace

Table read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open " + path);
    Table t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip_cr(line);
        if (line.empty()) continue;
        auto fields = split_line(line);
        if (lineno == 1) {
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size())
            throw validation_error(path + ":" + std::to_string(lineno) + ": expected " +
                                   std::to_string(t.header.size()) + " fields, got " +
                                   std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
    }
    if (t.header.empty()) throw validation_error(path + ": empty file");
    return t;
}

NumericTable read_numeric(const std::string& path) {
    const Table raw = read(path);
    NumericTable t;
    t.header = raw.header;
    t.rows.reserve(raw.rows.size());
    for (std::size_t r = 0; r < raw.rows.size(); ++r) {
        std::vector<double> row(raw.rows[r].size());
        for (std::size_t c = 0; c < row.size(); ++c)
            row[c] = parse_double(raw.rows[r][c], path + ":" + std::to_string(r + 2));
        t.rows.push_back(std::move(row));
    }
    return t;
}

std::string format_double(double v) {
    char buf[40];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf, static_cast<std::size_t>(n));
}

void write_numeric(const std::string& path, const NumericTable& table) {
    std::ostringstream out;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (c) out << ',';
        out << table.header[c];
    }
    out << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out << ',';
            out << format_double(row[c]);
        }
        out << '\n';
    }
    atomic_write_text(path, out.str());
}

void atomic_write_text(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw validation_error("cannot write " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw validation_error("write failed: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw validation_error("rename failed: " + tmp + " -> " + path);
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace ccsq::csv
