#include "darktrack/io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>

#include "darktrack/types.hpp"

namespace darktrack {

LineReader::LineReader(const std::filesystem::path& path) : path_(path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (f == nullptr) throw InputError("cannot open " + path.string());
    gzbuffer(f, 1 << 16);
    handle_ = f;
}

LineReader::~LineReader() {
    if (handle_ != nullptr) gzclose(static_cast<gzFile>(handle_));
}

bool LineReader::next(std::string& line) {
    auto f = static_cast<gzFile>(handle_);
    line.clear();
    char buf[4096];
    bool got = false;
    while (gzgets(f, buf, sizeof buf) != nullptr) {
        got = true;
        line.append(buf);
        if (!line.empty() && line.back() == '\n') break;
    }
    if (!got) {
        int err = 0;
        const char* msg = gzerror(f, &err);
        if (err != Z_OK && err != Z_STREAM_END) {
            throw InputError("read error in " + path_.string() + ": " + msg);
        }
        return false;
    }
    while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.pop_back();
    ++line_no_;
    return true;
}

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

std::string format_double(double v, int precision) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    // avoid "-0.000000"
    std::string s = buf;
    if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
    return s;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, std::string_view header)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw InputError("cannot write " + path.string());
    out_ << header << '\n';
}

void CsvWriter::raw_line(std::string_view line) {
    out_ << line << '\n';
    ++rows_;
}

void CsvWriter::close() {
    out_.close();
    if (!out_) throw InputError("failed writing " + path_.string());
}

std::string file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path.string());
    std::uint64_t h = 14695981039346656037ull;
    char buf[1 << 15];
    while (in) {
        in.read(buf, sizeof buf);
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    char out[17];
    std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
    return out;
}

}  // namespace darktrack
