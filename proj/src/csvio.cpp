#include "tanklab/csvio.hpp"

#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "tanklab/errors.hpp"

namespace tanklab::io {

std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string join_commas(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += fields[i];
    }
    return out;
}

}  // namespace

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : out_(path), path_(path), cols_(header.size()) {
    if (!out_) throw IoError("cannot open for writing: " + path);
    out_ << join_commas(header) << '\n';
}

void CsvWriter::write(const std::vector<double>& row) {
    if (row.size() != cols_)
        throw ShapeError("csv row width " + std::to_string(row.size()) + " != header width " +
                         std::to_string(cols_) + " in " + path_);
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) line += ',';
        line += format_g17(row[i]);
    }
    out_ << line << '\n';
}

void CsvWriter::write_raw(const std::string& line) { out_ << line << '\n'; }

void CsvWriter::close() {
    if (closed_) return;
    closed_ = true;
    out_.flush();
    if (!out_) throw IoError("write failed: " + path_);
    out_.close();
}

CsvWriter::~CsvWriter() {
    // destructor must not throw; explicit close() reports failures
    if (!closed_) {
        out_.flush();
        closed_ = true;
    }
}

CsvReader::CsvReader(const std::string& path) : in_(path), path_(path) {
    if (!in_) throw MissingInputError("cannot open: " + path);
    std::string line;
    if (!std::getline(in_, line)) throw SchemaError("empty csv: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    header_ = split_commas(line);
}

void CsvReader::require_header(const std::vector<std::string>& expected) const {
    if (header_.size() != expected.size())
        throw SchemaError(path_ + ": expected " + std::to_string(expected.size()) +
                          " columns, found " + std::to_string(header_.size()));
    for (std::size_t i = 0; i < expected.size(); ++i)
        if (header_[i] != expected[i])
            throw SchemaError(path_ + ": column " + std::to_string(i) + " is '" + header_[i] +
                              "', expected '" + expected[i] + "'");
}

bool CsvReader::next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in_, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row_;
        fields = split_commas(line);
        if (fields.size() != header_.size())
            throw SchemaError(path_ + " row " + std::to_string(row_) + ": " +
                              std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(header_.size()));
        return true;
    }
    return false;
}

double CsvReader::as_double(const std::vector<std::string>& fields, std::size_t col) const {
    const std::string& f = fields.at(col);
    char* end = nullptr;
    double v = std::strtod(f.c_str(), &end);
    if (end == f.c_str() || *end != '\0')
        throw SchemaError(path_ + " row " + std::to_string(row_) + " col " + std::to_string(col) +
                          ": not a number: '" + f + "'");
    return v;
}

}  // namespace tanklab::io
