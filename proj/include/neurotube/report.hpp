#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace nt {

struct Series {
    std::string name;
    std::vector<double> values;
};

/// Line chart of one or more loss traces against step index. Non-finite
/// values are skipped. Output is deterministic for identical input.
std::string render_loss_svg(const std::vector<Series>& series, const std::string& title = "training loss");

/// Vertical bar chart, one bar per (label, value); NaN bars are drawn empty
/// and labelled "n/a". The value axis spans at least [0, y_max] and grows to
/// fit the largest finite bar.
std::string render_bar_svg(const std::vector<std::pair<std::string, double>>& bars, const std::string& title,
                           double y_max = 1.0);

/// Minimal CSV reader for the numeric tables this project writes: a header
/// line, then rows of comma-separated fields without quoting. Malformed
/// input raises ParseError carrying the 1-based line number.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::uint64_t> lines;  // 1-based source line of each row

    std::size_t column(const std::string& name) const;  // throws ArgumentError if absent
    std::vector<double> numbers(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text);
CsvTable load_csv(const std::string& path);

}  // namespace nt
