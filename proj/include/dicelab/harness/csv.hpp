#pragma once

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dicelab::harness {

/// Shortest round-trip-safe text for a double (17 significant digits).
inline std::string format_float(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

class CsvRow {
public:
    template <typename T> CsvRow& operator<<(const T& v) {
        if (!first_) out_ << ',';
        first_ = false;
        if constexpr (std::is_floating_point_v<T>)
            out_ << format_float(v);
        else
            out_ << v;
        return *this;
    }
    std::string str() const { return out_.str(); }

private:
    std::ostringstream out_;
    bool first_ = true;
};

struct CsvTable {
    std::vector<std::string> comments; ///< leading '#' lines, without the '#'
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return static_cast<int>(i);
        return -1;
    }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(line);
    while (std::getline(in, item, ',')) out.push_back(item);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

/// Reads a comma-separated table with optional leading '#' comment lines.
inline CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (!have_header) t.comments.push_back(line.substr(1));
            continue;
        }
        auto fields = split_csv_line(line);
        if (!have_header) {
            t.columns = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != t.columns.size())
            throw std::runtime_error("csv: row has " + std::to_string(fields.size()) + " fields, header has " +
                                     std::to_string(t.columns.size()));
        t.rows.push_back(std::move(fields));
    }
    if (!have_header) throw std::runtime_error("csv: missing header line");
    return t;
}

} // namespace dicelab::harness
