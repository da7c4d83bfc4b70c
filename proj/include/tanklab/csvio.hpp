#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace tanklab::io {

/// %.17g, enough digits to round-trip a double exactly.
std::string format_g17(double v);

/// Line-oriented CSV writer; rows are flushed on close() which also verifies
/// stream health so truncated writes surface as errors.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header);
    void write(const std::vector<double>& row);
    void write_raw(const std::string& line);
    void close();
    ~CsvWriter();

private:
    std::ofstream out_;
    std::string path_;
    std::size_t cols_ = 0;
    bool closed_ = false;
};

/// CSV reader with header validation and row/column diagnostics.
class CsvReader {
public:
    explicit CsvReader(const std::string& path);
    const std::vector<std::string>& header() const { return header_; }
    /// Throws SchemaError naming the first mismatched column.
    void require_header(const std::vector<std::string>& expected) const;
    /// Next data row split on commas; false at end of file.
    bool next(std::vector<std::string>& fields);
    /// Parses fields[col] as double with file/row/column diagnostics.
    double as_double(const std::vector<std::string>& fields, std::size_t col) const;
    std::size_t row() const { return row_; }

private:
    std::ifstream in_;
    std::string path_;
    std::vector<std::string> header_;
    std::size_t row_ = 0;
};

}  // namespace tanklab::io
