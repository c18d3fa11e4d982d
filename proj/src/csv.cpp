#include "sag/csv.hpp"

#include <charconv>
#include <sstream>

#include "sag/errors.hpp"

namespace sag {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return cells;
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw SchemaError(source.string() + ": missing column '" + name + "'");
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    CsvTable table;
    table.source = path;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && in.eof()) break;
        auto cells = split_line(line);
        if (first) {
            table.header = std::move(cells);
            first = false;
            continue;
        }
        if (cells.size() != table.header.size()) {
            throw SchemaError(path.string() + ": row " +
                              std::to_string(table.rows.size() + 2) + " has " +
                              std::to_string(cells.size()) + " cells, header has " +
                              std::to_string(table.header.size()));
        }
        table.rows.push_back(std::move(cells));
    }
    if (first) {
        throw SchemaError(path.string() + ": empty file, expected a header row");
    }
    return table;
}

double cell_to_double(const std::string& cell, const std::string& context) {
    double value = 0.0;
    const char* first = cell.data();
    const char* last = first + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || cell.empty()) {
        throw SchemaError(context + ": '" + cell + "' is not a number");
    }
    return value;
}

int cell_to_int(const std::string& cell, const std::string& context) {
    int value = 0;
    const char* first = cell.data();
    const char* last = first + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || cell.empty()) {
        throw SchemaError(context + ": '" + cell + "' is not an integer");
    }
    return value;
}

std::string fmt_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) {
        throw Error("fmt_double: conversion failed");
    }
    return std::string(buf, ptr);
}

CsvWriter::CsvWriter(const std::filesystem::path& path,
                     const std::vector<std::string>& header)
    : path_(path), out_(path), width_(header.size()), open_(true) {
    if (!out_) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    row(header);
}

CsvWriter::~CsvWriter() {
    if (open_) {
        out_.flush();
        open_ = false;
    }
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != width_) {
        throw Error("CsvWriter: row width " + std::to_string(cells.size()) +
                    " does not match header width " + std::to_string(width_));
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out_ << ',';
        out_ << cells[i];
    }
    out_ << '\n';
}

void CsvWriter::close() {
    if (!open_) return;
    out_.flush();
    open_ = false;
    if (!out_) {
        throw IoError("write failure on '" + path_.string() + "'");
    }
    out_.close();
}

}  // namespace sag
