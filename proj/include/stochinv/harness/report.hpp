#pragma once

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "../errors.hpp"

namespace stochinv::harness {

/// One pass/fail item in a run summary.
struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct RunReport {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    std::vector<std::pair<std::string, std::string>> summary;
    std::vector<Check> checks;

    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }

    const Check* find_check(const std::string& n) const {
        for (const auto& c : checks)
            if (c.name == n) return &c;
        return nullptr;
    }

    void add_summary(std::string key, std::string value) {
        summary.emplace_back(std::move(key), std::move(value));
    }
};

/// Shortest round-trippable form is not needed here; %.17g is exact.
inline std::string format_real(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// RFC 4180 quoting for fields that need it.
inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

namespace detail {

/// Writes via a temporary file and renames, so an aborted run leaves no
/// partial artifact at `path`.
template <typename Writer>
void write_atomically(const std::filesystem::path& path, Writer&& write) {
    auto tmp = path;
    tmp += ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot open " + tmp.string() + " for writing: " +
                                     std::strerror(errno));
        }
        try {
            write(out);
        } catch (...) {
            out.close();
            std::filesystem::remove(tmp);
            throw;
        }
        out.flush();
        if (!out) {
            std::filesystem::remove(tmp);
            throw std::runtime_error("write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw std::runtime_error("cannot rename " + tmp.string() + " to " + path.string() + ": " +
                                 ec.message());
    }
}

}  // namespace detail

/// Header row, then one row per grid point with %.17g reals. Lines end
/// in '\n'. Rows with non-finite values are rejected before anything
/// is written.
inline void write_csv(const RunReport& report, const std::filesystem::path& path) {
    for (std::size_t r = 0; r < report.rows.size(); ++r) {
        if (report.rows[r].size() != report.columns.size()) {
            throw std::invalid_argument("write_csv: row " + std::to_string(r) + " has " +
                                        std::to_string(report.rows[r].size()) + " fields, header has " +
                                        std::to_string(report.columns.size()));
        }
        for (double x : report.rows[r]) {
            if (!std::isfinite(x)) {
                throw NumericalError("write_csv: non-finite value in row " + std::to_string(r) +
                                     " of " + path.string());
            }
        }
    }
    detail::write_atomically(path, [&](std::ostream& out) {
        for (std::size_t c = 0; c < report.columns.size(); ++c) {
            if (c) out << ',';
            out << csv_field(report.columns[c]);
        }
        out << '\n';
        for (const auto& row : report.rows) {
            for (std::size_t c = 0; c < row.size(); ++c) {
                if (c) out << ',';
                out << format_real(row[c]);
            }
            out << '\n';
        }
    });
}

/// Plain-text summary: key = value lines, then one PASS/FAIL line per check.
inline std::string format_summary(const RunReport& report) {
    std::string s = "# " + report.name + "\n";
    for (const auto& [k, v] : report.summary) s += k + " = " + v + "\n";
    for (const auto& c : report.checks) {
        s += std::string(c.pass ? "[PASS] " : "[FAIL] ") + c.name;
        if (!c.detail.empty()) s += ": " + c.detail;
        s += "\n";
    }
    return s;
}

inline void write_summary(const RunReport& report, const std::filesystem::path& path) {
    detail::write_atomically(path, [&](std::ostream& out) { out << format_summary(report); });
}

/// Parses a CSV produced by write_csv (no quoted numeric fields).
struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    CsvTable t;
    std::string line;
    auto split = [](const std::string& l) {
        std::vector<std::string> out;
        std::size_t start = 0;
        while (true) {
            auto pos = l.find(',', start);
            out.push_back(l.substr(start, pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        return out;
    };
    if (!std::getline(in, line)) return t;
    t.columns = split(line);
    while (std::getline(in, line)) {
        std::vector<double> row;
        for (const auto& f : split(line)) row.push_back(std::strtod(f.c_str(), nullptr));
        t.rows.push_back(std::move(row));
    }
    return t;
}

}  // namespace stochinv::harness
