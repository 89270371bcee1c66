#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "timfg/errors.hpp"

namespace timfg {

/// Formats a double with 17 significant digits, enough to round-trip the
/// exact binary value.  All CSV output goes through this so that identical
/// runs produce byte-identical files.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Minimal CSV writer: a header row, then rows of numbers or strings.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path) {
        if (!out_) throw ConfigError("cannot open CSV output file: " + path);
        write_strings(header);
    }

    void write_row(const std::vector<double>& values) {
        std::string line;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) line += ',';
            line += format_double(values[i]);
        }
        out_ << line << '\n';
    }

    void write_strings(const std::vector<std::string>& cells) {
        std::string line;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) line += ',';
            line += cells[i];
        }
        out_ << line << '\n';
    }

private:
    std::ofstream out_;
};

} // namespace timfg
