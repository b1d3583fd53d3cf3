#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace darktrack {

/// Reads text lines from a plain or gzip-compressed file (zlib detects the
/// compression from the stream header, so `.gz` and plain files share a path).
class LineReader {
public:
    explicit LineReader(const std::filesystem::path& path);
    ~LineReader();
    LineReader(const LineReader&) = delete;
    LineReader& operator=(const LineReader&) = delete;

    /// Returns false at end of file. Strips the trailing "\n" / "\r\n".
    bool next(std::string& line);
    std::size_t line_number() const { return line_no_; }

private:
    void* handle_ = nullptr;  // gzFile
    std::size_t line_no_ = 0;
    std::filesystem::path path_;
};

std::vector<std::string_view> split_fields(std::string_view line, char sep = ',');
std::string_view trim(std::string_view s);

/// Fixed-precision decimal rendering; stable across runs for diff-based tests.
std::string format_double(double v, int precision = 6);

/// CSV file with a header line; counts data rows for the run manifest.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, std::string_view header);

    template <class... Fields>
    void row(const Fields&... fields) {
        bool first = true;
        ((write_field(fields, first)), ...);
        out_ << '\n';
        ++rows_;
    }
    void raw_line(std::string_view line);

    std::size_t rows() const { return rows_; }
    const std::filesystem::path& path() const { return path_; }
    void close();

private:
    void write_field(const std::string& v, bool& first) { sep(first); out_ << v; }
    void write_field(std::string_view v, bool& first) { sep(first); out_ << v; }
    void write_field(const char* v, bool& first) { sep(first); out_ << v; }
    void write_field(double v, bool& first) { sep(first); out_ << format_double(v); }
    void write_field(bool v, bool& first) { sep(first); out_ << (v ? 1 : 0); }
    template <class I>
    void write_field(I v, bool& first) requires std::is_integral_v<I> {
        sep(first);
        out_ << v;
    }
    void sep(bool& first) {
        if (!first) out_ << ',';
        first = false;
    }

    std::filesystem::path path_;
    std::ofstream out_;
    std::size_t rows_ = 0;
};

/// 64-bit FNV-1a digest of a file's bytes, rendered as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

}  // namespace darktrack
