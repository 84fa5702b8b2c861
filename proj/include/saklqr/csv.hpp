#pragma once

#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace saklqr {

/// Shortest-round-trip decimal rendering of a double. Deterministic and
/// locale-independent, so identical runs produce identical bytes.
inline std::string format_double(double v) {
    char buf[40];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        double parsed = 0.0;
        std::sscanf(buf, "%lf", &parsed);
        if (parsed == v) {
            break;
        }
    }
    return buf;
}

/// Minimal CSV writer: one header row, LF line endings, '.' decimals.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header)
        : out_(path, std::ios::binary) {
        if (!out_) {
            throw std::runtime_error("CsvWriter: cannot open " + path);
        }
        columns_ = header.size();
        for (size_t i = 0; i < header.size(); ++i) {
            if (i > 0) {
                out_ << ',';
            }
            out_ << header[i];
        }
        out_ << '\n';
    }

    void write_row(const std::vector<std::string>& cells) {
        if (cells.size() != columns_) {
            throw std::runtime_error("CsvWriter: row width mismatch");
        }
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i > 0) {
                out_ << ',';
            }
            out_ << cells[i];
        }
        out_ << '\n';
    }

    void flush() { out_.flush(); }

private:
    std::ofstream out_;
    size_t columns_ = 0;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    int column(const std::string& name) const {
        for (size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) {
                return static_cast<int>(i);
            }
        }
        throw std::runtime_error("CsvTable: no column named " + name);
    }
};

/// Parse a numeric CSV written by CsvWriter. Non-numeric cells parse as
/// NaN except the trailing label columns, which are skipped by callers.
inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("read_csv: cannot open " + path);
    }
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (first) {
            table.header = cells;
            first = false;
            continue;
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) {
            try {
                row.push_back(std::stod(c));
            } catch (...) {
                row.push_back(std::numeric_limits<double>::quiet_NaN());
            }
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("read_file_bytes: cannot open " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace saklqr
