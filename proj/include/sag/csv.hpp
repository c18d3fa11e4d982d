#ifndef SAG_CSV_HPP
#define SAG_CSV_HPP

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace sag {

/**
 * A fully loaded CSV file: header plus string cells.
 *
 * The formats used here are plain comma-separated values with no quoting or
 * embedded commas, so a simple splitter is the whole parser.  Numeric
 * conversion happens at access time with the file and row kept for error
 * messages.
 */
struct CsvTable {
    std::filesystem::path source;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of a named column; throws SchemaError if absent.
    std::size_t column(const std::string& name) const;

    const std::string& cell(std::size_t row, std::size_t col) const {
        return rows[row][col];
    }
};

/// Load and split a CSV file.  IoError if unreadable, SchemaError if ragged.
CsvTable read_csv(const std::filesystem::path& path);

/// Strict full-string conversions; throw SchemaError with context on failure.
double cell_to_double(const std::string& cell, const std::string& context);
int cell_to_int(const std::string& cell, const std::string& context);

/// Shortest round-trip decimal rendering (deterministic across platforms).
std::string fmt_double(double v);

/**
 * Line-at-a-time CSV writer.  Rows are joined with commas and a trailing
 * newline; close() (or destruction) flushes and reports write failures.
 */
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path,
              const std::vector<std::string>& header);
    ~CsvWriter();

    void row(const std::vector<std::string>& cells);
    void close();

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::size_t width_ = 0;
    bool open_ = false;
};

}  // namespace sag

#endif  // SAG_CSV_HPP
