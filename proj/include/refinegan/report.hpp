#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "refinegan/common.hpp"

namespace refinegan {

// Plots and tables are derived from the CSV artifacts alone, never from
// in-memory training state, so a report can always be rebuilt later.

struct ParsedCsv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;  // ragged rows are rejected
};

inline ParsedCsv parse_csv(const std::string& text) {
    ParsedCsv out;
    std::istringstream lines(text);
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = s.find(',', start);
            if (comma == std::string::npos) {
                cells.push_back(s.substr(start));
                break;
            }
            cells.push_back(s.substr(start, comma - start));
            start = comma + 1;
        }
        return cells;
    };
    while (std::getline(lines, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (out.header.empty()) {
            out.header = split(line);
            continue;
        }
        auto cells = split(line);
        if (cells.size() != out.header.size()) throw DataError("csv: ragged row '" + line + "'");
        out.rows.push_back(std::move(cells));
    }
    if (out.header.empty()) throw DataError("csv: no header");
    return out;
}

namespace report_detail {

inline int column_of(const ParsedCsv& csv, const std::string& name) {
    for (std::size_t i = 0; i < csv.header.size(); ++i)
        if (csv.header[i] == name) return static_cast<int>(i);
    throw DataError("csv: missing column '" + name + "'");
}

/// Empty cell -> NaN (a metric that was undefined for that row).
inline double cell_value(const std::string& s) {
    if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
    try {
        return std::stod(s);
    } catch (const std::exception&) {
        throw DataError("csv: non-numeric cell '" + s + "'");
    }
}

inline std::string fmt_g(double v, int prec = 4) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    return buf;
}

}  // namespace report_detail

/// Loss curves as a standalone SVG: one polyline per loss column over the
/// step axis, shared scale, small legend. Non-finite samples are skipped.
inline std::string render_loss_svg(const ParsedCsv& csv) {
    using report_detail::cell_value;
    using report_detail::column_of;
    using report_detail::fmt_g;
    const int step_col = column_of(csv, "step");
    const char* series_names[4] = {"d_loss", "g_adv", "l1", "total"};
    const char* series_colors[4] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd"};
    int series_cols[4];
    for (int s = 0; s < 4; ++s) series_cols[s] = column_of(csv, series_names[s]);

    const double W = 880, H = 520, L = 64, R = 16, T = 34, B = 46;
    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"880\" height=\"520\" "
           "viewBox=\"0 0 880 520\" font-family=\"monospace\" font-size=\"12\">\n";
    svg += "<rect width=\"880\" height=\"520\" fill=\"white\"/>\n";

    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    bool any = false;
    for (const auto& row : csv.rows) {
        const double x = cell_value(row[static_cast<std::size_t>(step_col)]);
        if (!std::isfinite(x)) continue;
        for (int s = 0; s < 4; ++s) {
            const double y = cell_value(row[static_cast<std::size_t>(series_cols[s])]);
            if (!std::isfinite(y)) continue;
            if (!any) {
                x0 = x1 = x;
                y0 = y1 = y;
                any = true;
            } else {
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
        }
    }
    if (!any) {
        svg += "<text x=\"440\" y=\"260\" text-anchor=\"middle\">no data</text>\n</svg>\n";
        return svg;
    }
    if (x1 == x0) x1 = x0 + 1;
    const double pad = (y1 - y0) * 0.05;
    y0 -= pad > 0 ? pad : 0.5;
    y1 += pad > 0 ? pad : 0.5;

    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

    for (int t = 0; t <= 5; ++t) {
        const double xv = x0 + (x1 - x0) * t / 5.0;
        const double yv = y0 + (y1 - y0) * t / 5.0;
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>\n",
                      px(xv), py(y0), px(xv), py(y1));
        svg += buf;
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>\n",
                      px(x0), py(yv), px(x1), py(yv));
        svg += buf;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%s</text>\n", px(xv),
                      H - B + 18, fmt_g(xv).c_str());
        svg += buf;
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%s</text>\n",
                      L - 6, py(yv) + 4, fmt_g(yv).c_str());
        svg += buf;
    }
    {
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                      px(x0), py(y0), px(x1), py(y0));
        svg += buf;
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                      px(x0), py(y0), px(x0), py(y1));
        svg += buf;
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">step</text>\n",
                      (px(x0) + px(x1)) / 2, H - 8);
        svg += buf;
    }
    for (int s = 0; s < 4; ++s) {
        std::string points;
        for (const auto& row : csv.rows) {
            const double x = cell_value(row[static_cast<std::size_t>(step_col)]);
            const double y = cell_value(row[static_cast<std::size_t>(series_cols[s])]);
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.1f,%.1f ", px(x), py(y));
            points += buf;
        }
        if (points.empty()) continue;
        svg += "<polyline fill=\"none\" stroke=\"";
        svg += series_colors[s];
        svg += "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
    }
    for (int s = 0; s < 4; ++s) {
        const double lx = L + 12 + 120.0 * s;
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%.1f\" y1=\"16\" x2=\"%.1f\" y2=\"16\" stroke=\"%s\" stroke-width=\"3\"/>"
                      "<text x=\"%.1f\" y=\"20\">%s</text>\n",
                      lx, lx + 22, series_colors[s], lx + 28, series_names[s]);
        svg += buf;
    }
    svg += "</svg>\n";
    return svg;
}

/// Plain-text tables, one per region, patients as rows and metrics as
/// columns, with a trailing mean over the values that are present.
inline std::string render_metric_table(const ParsedCsv& csv) {
    using report_detail::cell_value;
    using report_detail::column_of;
    using report_detail::fmt_g;
    const std::size_t patient_col = static_cast<std::size_t>(column_of(csv, "patient"));
    const std::size_t region_col = static_cast<std::size_t>(column_of(csv, "region"));

    std::vector<std::string> regions;
    for (const auto& row : csv.rows) {
        const std::string& r = row[region_col];
        bool seen = false;
        for (const auto& k : regions) seen = seen || k == r;
        if (!seen) regions.push_back(r);
    }

    std::vector<std::size_t> metric_cols;
    for (std::size_t i = 0; i < csv.header.size(); ++i)
        if (i != patient_col && i != region_col) metric_cols.push_back(i);

    const int name_w = 12, col_w = 12;
    std::string out;
    auto pad = [](const std::string& s, int w) {
        std::string t = s.size() > static_cast<std::size_t>(w) ? s.substr(0, static_cast<std::size_t>(w)) : s;
        return t + std::string(static_cast<std::size_t>(w) - t.size(), ' ');
    };
    for (const auto& region : regions) {
        out += "region: " + region + "\n";
        out += pad("patient", name_w);
        for (std::size_t c : metric_cols) out += pad(csv.header[c], col_w);
        out += "\n";
        std::vector<double> sums(metric_cols.size(), 0.0);
        std::vector<std::size_t> counts(metric_cols.size(), 0);
        for (const auto& row : csv.rows) {
            if (row[region_col] != region) continue;
            out += pad(row[patient_col], name_w);
            for (std::size_t k = 0; k < metric_cols.size(); ++k) {
                const double v = cell_value(row[metric_cols[k]]);
                if (std::isfinite(v)) {
                    sums[k] += v;
                    ++counts[k];
                    out += pad(fmt_g(v), col_w);
                } else {
                    out += pad("-", col_w);
                }
            }
            out += "\n";
        }
        out += pad("mean", name_w);
        for (std::size_t k = 0; k < metric_cols.size(); ++k)
            out += pad(counts[k] ? fmt_g(sums[k] / static_cast<double>(counts[k])) : "-", col_w);
        out += "\n\n";
    }
    return out;
}

}  // namespace refinegan
