#pragma once

// SVG charts from a sweep CSV. No recomputation: everything plotted is a mean
// of columns already in the file.
//
//   score_n<k>.svg  mean normalized_score vs gamma_hat for n_suboptimal = k
//   terms.svg       mean term1/term2/term3 vs gamma_hat over all cells

#include "dicelab/harness/csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace dicelab::harness {

class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& plot_required_columns() {
    static const std::vector<std::string> cols = {"gamma_hat", "n_suboptimal", "normalized_score",
                                                  "term1",     "term2",        "term3",
                                                  "status"};
    return cols;
}

/// Throws SchemaError naming missing and unexpected columns.
inline void check_plot_schema(const CsvTable& t) {
    std::vector<std::string> missing;
    for (const auto& c : plot_required_columns())
        if (t.column(c) < 0) missing.push_back(c);
    if (missing.empty()) return;
    std::string msg = "plot: csv schema mismatch; missing:";
    for (const auto& c : missing) msg += " " + c;
    const std::set<std::string> required(plot_required_columns().begin(), plot_required_columns().end());
    msg += "; unexpected:";
    for (const auto& c : t.columns)
        if (!required.count(c)) msg += " " + c;
    throw SchemaError(msg);
}

struct Series {
    std::string label;
    std::string color;
    std::vector<std::pair<double, double>> points; ///< sorted by x
};

namespace detail {

inline std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

inline std::vector<double> ticks(double lo, double hi, int target = 5) {
    const double span = hi - lo;
    const double raw = span / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (m * mag >= raw) {
            step = m * mag;
            break;
        }
    std::vector<double> out;
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step)
        out.push_back(std::abs(v) < 1e-12 * span ? 0.0 : v);
    return out;
}

} // namespace detail

/// Renders a line chart. With no data points the axes are drawn over [0,1]x[0,1].
inline std::string render_line_chart(const std::string& title, const std::string& x_label,
                                     const std::string& y_label, const std::vector<Series>& series) {
    constexpr double W = 640, H = 420, L = 70, R = 150, T = 40, B = 55;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    bool any = false;
    for (const auto& s : series)
        for (auto [x, y] : s.points) {
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            if (!any) {
                x0 = x1 = x;
                y0 = y1 = y;
                any = true;
            }
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
    if (x1 - x0 < 1e-12) {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if (y1 - y0 < 1e-12) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

    using detail::num;
    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W) + "\" height=\"" + num(H) +
           "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + num(W / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
           detail::escape(title) + "</text>\n";
    svg += "<line x1=\"" + num(L) + "\" y1=\"" + num(H - B) + "\" x2=\"" + num(W - R) + "\" y2=\"" + num(H - B) +
           "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + num(L) + "\" y1=\"" + num(T) + "\" x2=\"" + num(L) + "\" y2=\"" + num(H - B) +
           "\" stroke=\"black\"/>\n";
    for (double v : detail::ticks(x0, x1)) {
        svg += "<line x1=\"" + num(px(v)) + "\" y1=\"" + num(H - B) + "\" x2=\"" + num(px(v)) + "\" y2=\"" +
               num(H - B + 5) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + num(px(v)) + "\" y=\"" + num(H - B + 18) + "\" text-anchor=\"middle\">" + num(v) +
               "</text>\n";
    }
    for (double v : detail::ticks(y0, y1)) {
        svg += "<line x1=\"" + num(L - 5) + "\" y1=\"" + num(py(v)) + "\" x2=\"" + num(W - R) + "\" y2=\"" +
               num(py(v)) + "\" stroke=\"#dddddd\"/>\n";
        svg += "<text x=\"" + num(L - 8) + "\" y=\"" + num(py(v) + 4) + "\" text-anchor=\"end\">" + num(v) +
               "</text>\n";
    }
    svg += "<text x=\"" + num((L + W - R) / 2) + "\" y=\"" + num(H - 15) + "\" text-anchor=\"middle\">" +
           detail::escape(x_label) + "</text>\n";
    svg += "<text transform=\"translate(18," + num((T + H - B) / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
           detail::escape(y_label) + "</text>\n";

    int k = 0;
    for (const auto& s : series) {
        std::string pts;
        for (auto [x, y] : s.points) {
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            if (!pts.empty()) pts += ' ';
            pts += num(px(x)) + "," + num(py(y));
            svg += "<circle cx=\"" + num(px(x)) + "\" cy=\"" + num(py(y)) + "\" r=\"3\" fill=\"" + s.color + "\"/>\n";
        }
        if (!pts.empty())
            svg += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
        const double ly = T + 10 + 20 * k++;
        svg += "<line x1=\"" + num(W - R + 12) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(W - R + 32) + "\" y2=\"" +
               num(ly) + "\" stroke=\"" + s.color + "\" stroke-width=\"2\"/>\n";
        svg += "<text x=\"" + num(W - R + 38) + "\" y=\"" + num(ly + 4) + "\">" + detail::escape(s.label) +
               "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

/// Per-x means of one column, grouped by an optional key column value.
inline std::vector<std::pair<double, double>> column_means(const CsvTable& t, const std::string& y_col,
                                                           int key_col = -1, const std::string& key = {}) {
    const int xi = t.column("gamma_hat"), yi = t.column(y_col), st = t.column("status");
    std::map<double, std::pair<double, int>> acc;
    for (const auto& row : t.rows) {
        if (row[st] != "ok") continue;
        if (key_col >= 0 && row[key_col] != key) continue;
        auto& [sum, n] = acc[std::stod(row[xi])];
        sum += std::stod(row[yi]);
        ++n;
    }
    std::vector<std::pair<double, double>> out;
    for (const auto& [x, v] : acc) out.emplace_back(x, v.first / v.second);
    return out;
}

/// Writes the charts for `table` into `out_dir` and returns the paths written, in order.
inline std::vector<std::filesystem::path> emit_plots(const CsvTable& table, const std::filesystem::path& out_dir) {
    check_plot_schema(table);
    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> written;
    auto write = [&](const std::string& name, const std::string& svg) {
        const auto path = out_dir / name;
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("plot: cannot write " + path.string());
        f << svg;
        written.push_back(path);
    };

    const int ni = table.column("n_suboptimal");
    std::set<int> ns;
    for (const auto& row : table.rows) ns.insert(std::stoi(row[ni]));
    for (int n : ns) {
        Series s{"mean score", "#1f77b4", column_means(table, "normalized_score", ni, std::to_string(n))};
        write("score_n" + std::to_string(n) + ".svg",
              render_line_chart("normalized score, " + std::to_string(n) + " suboptimal trajectories",
                                "training discount", "normalized score", {s}));
    }
    std::vector<Series> terms = {
        {"discount term", "#2ca02c", column_means(table, "term1")},
        {"dynamics term", "#d62728", column_means(table, "term2")},
        {"policy term", "#9467bd", column_means(table, "term3")},
    };
    write("terms.svg", render_line_chart("bound terms (mean over cells)", "training discount", "magnitude", terms));
    return written;
}

inline std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& csv_path,
                                                     const std::filesystem::path& out_dir) {
    std::ifstream in(csv_path);
    if (!in) throw std::runtime_error("plot: cannot open " + csv_path.string());
    return emit_plots(read_csv(in), out_dir);
}

} // namespace dicelab::harness
