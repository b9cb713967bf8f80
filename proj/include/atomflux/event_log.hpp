#pragma once

// Streaming output writers. Both stream rows straight to disk (nothing is
// accumulated in memory) and format numbers deterministically: integers in
// decimal, doubles with shortest-round-trip formatting. Output bytes depend
// only on the data written, never on wall-clock time or environment.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace atomflux {

inline void append_double(std::string& out, double v) {
    char buf[64];
    auto* end = std::to_chars(buf, buf + sizeof buf, v).ptr;
    out.append(buf, end);
}

inline void append_json_escaped(std::string& out, std::string_view s) {
    out += '"';
    for (char ch : s) {
        switch (ch) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        case '\r': out += "\\r"; break;
        default:
            if (static_cast<unsigned char>(ch) < 0x20) {
                char buf[8];
                std::snprintf(buf, sizeof buf, "\\u%04x", ch);
                out += buf;
            } else {
                out += ch;
            }
        }
    }
    out += '"';
}

// One JSON object per line. Keys appear in the order fields are added.
class JsonlWriter {
public:
    explicit JsonlWriter(const std::string& path)
        : out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw std::runtime_error("cannot open log file: " + path);
    }

    class Line {
    public:
        explicit Line(JsonlWriter& w) : writer_(w) { buf_ = "{"; }
        Line(const Line&) = delete;
        Line& operator=(const Line&) = delete;

        template <typename T>
        Line& field(std::string_view key, T value) {
            if (buf_.size() > 1) buf_ += ',';
            append_json_escaped(buf_, key);
            buf_ += ':';
            if constexpr (std::is_same_v<T, bool>) {
                buf_ += value ? "true" : "false";
            } else if constexpr (std::is_integral_v<T>) {
                buf_ += std::to_string(value);
            } else if constexpr (std::is_floating_point_v<T>) {
                append_double(buf_, value);
            } else {
                append_json_escaped(buf_, std::string_view(value));
            }
            return *this;
        }

        void commit() {
            buf_ += "}\n";
            writer_.out_.write(buf_.data(),
                               static_cast<std::streamsize>(buf_.size()));
            buf_.clear();
        }

    private:
        JsonlWriter& writer_;
        std::string buf_;
    };

    Line line() { return Line(*this); }
    void flush() { out_.flush(); }

private:
    std::ofstream out_;
};

// CSV with a `#format <tag>` first line (the schema version) and a header
// row. Cell values must not contain commas or newlines.
class CsvWriter {
public:
    CsvWriter(const std::string& path, std::string_view format_tag,
              const std::vector<std::string>& columns)
        : out_(path, std::ios::binary | std::ios::trunc), cols_(columns.size()) {
        if (!out_) throw std::runtime_error("cannot open csv file: " + path);
        std::string head = "#format ";
        head += format_tag;
        head += '\n';
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (i) head += ',';
            head += columns[i];
        }
        head += '\n';
        out_.write(head.data(), static_cast<std::streamsize>(head.size()));
    }

    template <typename... Ts>
    void row(Ts&&... values) {
        static_assert(sizeof...(Ts) > 0, "csv row must have cells");
        if (sizeof...(Ts) != cols_)
            throw std::logic_error("csv row width does not match the header");
        buf_.clear();
        std::size_t i = 0;
        (append_cell(values, i++), ...);
        buf_ += '\n';
        out_.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    }

    void flush() { out_.flush(); }

private:
    template <typename T>
    void append_cell(const T& value, std::size_t idx) {
        if (idx) buf_ += ',';
        if constexpr (std::is_same_v<std::decay_t<T>, bool>) {
            buf_ += value ? "true" : "false";
        } else if constexpr (std::is_integral_v<std::decay_t<T>>) {
            buf_ += std::to_string(value);
        } else if constexpr (std::is_floating_point_v<std::decay_t<T>>) {
            append_double(buf_, value);
        } else {
            std::string_view s{value};
            if (s.find(',') != std::string_view::npos ||
                s.find('\n') != std::string_view::npos)
                throw std::logic_error("csv cell contains a delimiter");
            buf_.append(s.data(), s.size());
        }
    }

    std::ofstream out_;
    std::size_t cols_;
    std::string buf_;
};

} // namespace atomflux
