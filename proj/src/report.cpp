#include "neurotube/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "neurotube/archive.hpp"
#include "neurotube/tensor.hpp"

namespace nt {
namespace {

constexpr double kWidth = 640, kHeight = 400, kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string header(const std::string& title) {
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
      << "</text>\n";
    return o.str();
}

std::string axes(double y_lo, double y_hi, const std::string& x_label) {
    std::ostringstream o;
    const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
    o << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0 << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1 << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = y_lo + (y_hi - y_lo) * i / 4.0;
        const double y = y0 - (y0 - y1) * i / 4.0;
        o << "<text x=\"" << x0 - 6 << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">" << num(v) << "</text>\n"
          << "<line x1=\"" << x0 << "\" y1=\"" << num(y) << "\" x2=\"" << x1 << "\" y2=\"" << num(y)
          << "\" stroke=\"#ddd\"/>\n";
    }
    if (!x_label.empty()) {
        o << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">"
          << escape(x_label) << "</text>\n";
    }
    return o.str();
}

}  // namespace

std::string render_loss_svg(const std::vector<Series>& series, const std::string& title) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    std::size_t longest = 0;
    for (const auto& s : series) {
        longest = std::max(longest, s.values.size());
        for (double v : s.values)
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    }
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    lo = std::min(lo, 0.0);
    if (hi <= lo) hi = lo + 1.0;
    std::ostringstream o;
    o << header(title) << axes(lo, hi, "step");
    const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
    const double span = longest > 1 ? static_cast<double>(longest - 1) : 1.0;
    for (std::size_t k = 0; k < series.size(); ++k) {
        const char* colour = kPalette[k % std::size(kPalette)];
        o << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
        bool first = true;
        for (std::size_t i = 0; i < series[k].values.size(); ++i) {
            const double v = series[k].values[i];
            if (!std::isfinite(v)) continue;
            const double x = x0 + (x1 - x0) * static_cast<double>(i) / span;
            const double y = y0 - (y0 - y1) * (v - lo) / (hi - lo);
            o << (first ? "" : " ") << num(x) << ',' << num(y);
            first = false;
        }
        o << "\"/>\n";
        const double ly = kTop + 14.0 * static_cast<double>(k);
        o << "<rect x=\"" << x1 - 110 << "\" y=\"" << num(ly - 9) << "\" width=\"10\" height=\"10\" fill=\"" << colour
          << "\"/>\n<text x=\"" << x1 - 96 << "\" y=\"" << num(ly) << "\">" << escape(series[k].name) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::string render_bar_svg(const std::vector<std::pair<std::string, double>>& bars, const std::string& title,
                           double y_max) {
    if (!(y_max > 0.0)) y_max = 1.0;
    for (const auto& b : bars)
        if (std::isfinite(b.second)) y_max = std::max(y_max, b.second);
    std::ostringstream o;
    o << header(title) << axes(0.0, y_max, "");
    const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
    const double slot = (x1 - x0) / static_cast<double>(std::max<std::size_t>(bars.size(), 1));
    for (std::size_t k = 0; k < bars.size(); ++k) {
        const double v = bars[k].second;
        const double cx = x0 + slot * (static_cast<double>(k) + 0.5);
        const double h = std::isfinite(v) ? (y0 - y1) * std::max(v, 0.0) / y_max : 0.0;
        o << "<rect x=\"" << num(cx - slot * 0.3) << "\" y=\"" << num(y0 - h) << "\" width=\"" << num(slot * 0.6)
          << "\" height=\"" << num(h) << "\" fill=\"" << kPalette[k % std::size(kPalette)] << "\"/>\n";
        o << "<text x=\"" << num(cx) << "\" y=\"" << num(y0 - h - 4) << "\" text-anchor=\"middle\">"
          << (std::isfinite(v) ? num(v) : std::string("n/a")) << "</text>\n";
        o << "<text x=\"" << num(cx) << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\">" << escape(bars[k].first)
          << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::size_t CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ArgumentError("csv: no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

std::vector<double> CsvTable::numbers(const std::string& name) const {
    const std::size_t c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::string& cell = rows[i][c];
        double v = 0.0;
        const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc() || end != cell.data() + cell.size() || cell.empty())
            throw ParseError("csv: column '" + name + "' holds non-numeric value '" + cell + "'",
                             i < lines.size() ? lines[i] : i + 2);
        out.push_back(v);
    }
    return out;
}

CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    std::uint64_t line_no = 0;
    auto split = [](const std::string& l) {
        std::vector<std::string> f;
        std::string cell;
        std::istringstream s(l);
        while (std::getline(s, cell, ',')) f.push_back(cell);
        if (!l.empty() && l.back() == ',') f.emplace_back();
        return f;
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (t.header.empty()) {
            t.header = split(line);
            continue;
        }
        auto row = split(line);
        if (row.size() != t.header.size()) {
            throw ParseError("csv: row has " + std::to_string(row.size()) + " fields, header has " +
                                 std::to_string(t.header.size()),
                             line_no);
        }
        t.rows.push_back(std::move(row));
        t.lines.push_back(line_no);
    }
    if (t.header.empty()) throw ParseError("csv: missing header", line_no);
    return t;
}

CsvTable load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str());
}

}  // namespace nt
