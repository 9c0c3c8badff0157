#pragma once

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace bailout {

/// Shortest-faithful decimal: 17 significant digits, '.' separator.
inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

using CsvCell = std::variant<double, long long, std::string>;

/// RFC-4180 CSV writer (UTF-8, CRLF-free rows, quoted strings when needed).
class CsvWriter {
public:
    CsvWriter(const std::string& path, std::initializer_list<std::string> header)
        : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot open " + path + " for writing");
        bool first = true;
        for (const auto& col : header) {
            if (!first) out_ << ',';
            out_ << escape(col);
            first = false;
        }
        out_ << '\n';
    }

    void row(std::initializer_list<CsvCell> cells) {
        bool first = true;
        for (const auto& cell : cells) {
            if (!first) out_ << ',';
            std::visit(
                [this](const auto& v) {
                    using T = std::decay_t<decltype(v)>;
                    if constexpr (std::is_same_v<T, double>) {
                        out_ << format_double(v);
                    } else if constexpr (std::is_same_v<T, long long>) {
                        out_ << v;
                    } else {
                        out_ << escape(v);
                    }
                },
                cell);
            first = false;
        }
        out_ << '\n';
    }

private:
    static std::string escape(const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += '"';
            q += c;
        }
        q += '"';
        return q;
    }

    std::ofstream out_;
};

} // namespace bailout
