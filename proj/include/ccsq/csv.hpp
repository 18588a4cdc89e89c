#pragma once

#include <string>
#include <vector>

namespace ccsq::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

// Reads a comma-separated file with a header row. No quoting support;
// fields must not contain commas. Throws validation_error with the line
// number on structural problems.
Table read(const std::string& path);

// Numeric table: header + row-major doubles.
struct NumericTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

NumericTable read_numeric(const std::string& path);
void write_numeric(const std::string& path, const NumericTable& table);

std::vector<std::string> split_line(const std::string& line);

double parse_double(const std::string& s, const std::string& context);

// Writes content to a sibling temp file and renames it into place, so a
// failed write never leaves a partial file at `path`.
void atomic_write_text(const std::string& path, const std::string& content);

std::string read_text(const std::string& path);

// Formats a double with enough digits to round-trip (max_digits10).
std::string format_double(double v);

} // namespace ccsq::csv
