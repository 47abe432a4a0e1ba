#include "tilq/csv.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace tilq {

std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : n_cols_(header.size()) {
    for (size_t i = 0; i < header.size(); ++i) {
        if (i) body_ += ',';
        body_ += header[i];
    }
    body_ += '\n';
}

void CsvWriter::add_row(const std::vector<double>& cells) {
    if (cells.size() != n_cols_) throw std::logic_error("csv: column count mismatch");
    for (size_t i = 0; i < cells.size(); ++i) {
        if (i) body_ += ',';
        body_ += fmt17(cells[i]);
    }
    body_ += '\n';
}

void CsvWriter::add_row_mixed(const std::vector<std::string>& cells) {
    if (cells.size() != n_cols_) throw std::logic_error("csv: column count mismatch");
    for (size_t i = 0; i < cells.size(); ++i) {
        if (i) body_ += ',';
        body_ += cells[i];
    }
    body_ += '\n';
}

void CsvWriter::write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << body_;
}

}  // namespace tilq
