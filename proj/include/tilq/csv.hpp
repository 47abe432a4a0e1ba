#pragma once

#include <string>
#include <vector>

namespace tilq {

/// Formats a double with 17 significant digits (lossless round trip).
std::string fmt17(double x);

/// Minimal CSV emitter: header row plus cell rows, numbers through fmt17.
/// Bodies are deterministic functions of the cell values, so equal runs
/// produce byte-identical files.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);

    void add_row(const std::vector<double>& cells);
    void add_row_mixed(const std::vector<std::string>& cells);

    const std::string& body() const { return body_; }
    void write(const std::string& path) const;

private:
    std::string body_;
    size_t n_cols_;
};

}  // namespace tilq
