#pragma once

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "carr/carr_core.hpp"

namespace carr::io {

/// Malformed input; the message names the source and line.
class CsvError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class RangeSchema { Range, HighLow };

struct RangeData {
    RangeSeries series;
    RangeSchema schema = RangeSchema::Range;
};

/// Reads `t,range` / `date,range` or `date,high,low` (ranges computed as
/// 100 * (ln high - ln low)). Column order is free; extra columns are ignored.
RangeData read_range_csv(std::istream& in, const std::string& source = "<input>");
RangeData read_range_csv_file(const std::string& path);

/// %.6g
std::string fmt6(double x);

/// Opens for writing or throws std::runtime_error naming the path.
void write_text_file(const std::string& path, const std::string& contents);

std::vector<double> parse_double_list(const std::string& text);

}  // namespace carr::io
