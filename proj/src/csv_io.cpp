#include "carr/csv_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>

namespace carr::io {

namespace {

std::string trim(std::string s) {
    auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
    s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
    s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
    return s;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

std::optional<double> to_double(const std::string& s) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = b + s.size();
    if (b != e && *b == '+') ++b;
    const auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e || b == e) return std::nullopt;
    return v;
}

}  // namespace

RangeData read_range_csv(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        if (trim(line).empty()) continue;
        header = split(line);
        break;
    }
    if (header.empty()) throw CsvError(source + ": empty file, expected a header line");
    for (auto& h : header) h = lower(h);

    auto col = [&](const std::string& name) -> std::optional<std::size_t> {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    };
    const auto c_range = col("range");
    const auto c_high = col("high");
    const auto c_low = col("low");
    auto c_label = col("date");
    if (!c_label) c_label = col("t");

    RangeData data;
    if (c_range) {
        data.schema = RangeSchema::Range;
    } else if (c_high && c_low) {
        data.schema = RangeSchema::HighLow;
    } else {
        throw CsvError(source + ":" + std::to_string(lineno) +
                       ": header must contain `range` (with t or date) or `date,high,low`");
    }

    std::vector<double> values;
    std::vector<std::string> labels;
    const std::size_t header_line = lineno;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto f = split(line);
        const std::string where = source + ":" + std::to_string(lineno) + ": ";
        if (f.size() != header.size())
            throw CsvError(where + "expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(f.size()));
        auto number = [&](std::size_t c, const char* what) {
            const auto v = to_double(f[c]);
            if (!v || !std::isfinite(*v))
                throw CsvError(where + "cannot parse " + what + " value '" + f[c] + "'");
            return *v;
        };
        if (data.schema == RangeSchema::Range) {
            const double r = number(*c_range, "range");
            if (!(r > 0.0)) throw CsvError(where + "range must be positive, got " + f[*c_range]);
            values.push_back(r);
        } else {
            const double hi = number(*c_high, "high");
            const double lo = number(*c_low, "low");
            if (!(hi > 0.0) || !(lo > 0.0)) throw CsvError(where + "prices must be positive");
            if (hi < lo) throw CsvError(where + "high " + f[*c_high] + " is below low " + f[*c_low]);
            const double r = 100.0 * (std::log(hi) - std::log(lo));
            if (!(r > 0.0)) throw CsvError(where + "zero range (high equals low)");
            values.push_back(r);
        }
        labels.push_back(c_label ? f[*c_label] : std::to_string(values.size()));
    }
    if (values.empty())
        throw CsvError(source + ":" + std::to_string(header_line) + ": no data rows after the header");
    data.series = RangeSeries(std::move(values), std::move(labels));
    return data;
}

RangeData read_range_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CsvError("cannot open " + path);
    return read_range_csv(in, path);
}

std::string fmt6(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

void write_text_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << contents;
    out.close();
    if (!out) throw std::runtime_error("error while writing " + path);
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    if (trim(text).empty()) return out;
    for (const auto& part : split(text)) {
        const auto v = to_double(part);
        if (!v) throw std::invalid_argument("cannot parse number '" + part + "' in list '" + text + "'");
        out.push_back(*v);
    }
    return out;
}

}  // namespace carr::io
