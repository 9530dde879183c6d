#include "credlens/pipeline/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "credlens/common/csv.hpp"
#include "credlens/common/io.hpp"
#include "credlens/pipeline/pipeline.hpp"

namespace credlens::pipeline {

namespace {

constexpr double kWidth = 980;
constexpr double kLabelWidth = 250;
constexpr double kBarWidth = 230;
constexpr double kGap = 40;
constexpr double kRow = 24;
constexpr double kTop = 56;
constexpr double kBottom = 56;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

/// Blue (low) to red (high).
std::string colour(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const int r = static_cast<int>(std::lround(30 + t * (255 - 30)));
    const int g = static_cast<int>(std::lround(136 + t * (0 - 136)));
    const int b = static_cast<int>(std::lround(229 + t * (82 - 229)));
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

double niceStep(double span) {
    if (!(span > 0)) return 1.0;
    const double raw = span / 4.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (const double m : {1.0, 2.0, 5.0, 10.0})
        if (raw <= m * mag) return m * mag;
    return 10.0 * mag;
}

}  // namespace

std::string xmlEscape(std::string_view text) {
    std::string out;
    for (const char c : text) {
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

ShapPlotData shapPlotFromCsv(std::string_view summaryCsv, std::string_view beeswarmCsv) {
    ShapPlotData d;
    const auto summary = csv::parse(summaryCsv);
    const auto fCol = summary.column("feature");
    const auto mCol = summary.column("mean_abs_shap");
    const auto rCol = summary.column("rank");
    std::vector<std::pair<long long, std::size_t>> order;
    for (std::size_t i = 0; i < summary.rows.size(); ++i) order.push_back({parseInteger(summary.rows[i][rCol]), i});
    std::sort(order.begin(), order.end());
    std::map<std::string, std::size_t> index;
    for (const auto& [rank, i] : order) {
        index[summary.rows[i][fCol]] = d.features.size();
        d.features.push_back(summary.rows[i][fCol]);
        d.meanAbs.push_back(parseDouble(summary.rows[i][mCol]));
    }
    const auto swarm = csv::parse(beeswarmCsv);
    const auto sf = swarm.column("feature");
    const auto sp = swarm.column("phi");
    const auto sv = swarm.column("feature_value");
    for (const auto& row : swarm.rows) {
        const auto it = index.find(row[sf]);
        if (it == index.end()) throw StageError("beeswarm feature '" + row[sf] + "' is not in the summary");
        d.points.push_back({it->second, parseDouble(row[sp]), parseDouble(row[sv])});
    }
    return d;
}

std::string renderShapSvg(const ShapPlotData& data, std::string_view title) {
    const std::size_t n = data.features.size();
    const double height = kTop + kRow * static_cast<double>(std::max<std::size_t>(n, 1)) + kBottom;
    const double barX = kLabelWidth;
    const double swarmX = kLabelWidth + kBarWidth + kGap;
    const double swarmW = kWidth - swarmX - 30;

    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(height) +
                    "\" viewBox=\"0 0 " + num(kWidth) + " " + num(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + num(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" + xmlEscape(title) + "</text>\n";

    const double maxBar = n ? *std::max_element(data.meanAbs.begin(), data.meanAbs.end()) : 1.0;
    double lo = 0.0, hi = 0.0;
    for (const auto& p : data.points) {
        lo = std::min(lo, p.phi);
        hi = std::max(hi, p.phi);
    }
    if (hi - lo < 1e-12) {
        lo -= 1;
        hi += 1;
    }
    const auto xOf = [&](double phi) { return swarmX + (phi - lo) / (hi - lo) * swarmW; };

    std::vector<double> vmin(n, INFINITY), vmax(n, -INFINITY);
    for (const auto& p : data.points) {
        vmin[p.feature] = std::min(vmin[p.feature], p.value);
        vmax[p.feature] = std::max(vmax[p.feature], p.value);
    }

    for (std::size_t i = 0; i < n; ++i) {
        const double y = kTop + kRow * static_cast<double>(i) + kRow / 2;
        s += "<text x=\"" + num(kLabelWidth - 8) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\">" +
             xmlEscape(data.features[i]) + "</text>\n";
        const double w = maxBar > 0 ? data.meanAbs[i] / maxBar * (kBarWidth - 10) : 0.0;
        s += "<rect x=\"" + num(barX) + "\" y=\"" + num(y - 7) + "\" width=\"" + num(w) + "\" height=\"14\" fill=\"#1e88e5\"/>\n";
        s += "<line x1=\"" + num(swarmX) + "\" y1=\"" + num(y) + "\" x2=\"" + num(swarmX + swarmW) + "\" y2=\"" + num(y) +
             "\" stroke=\"#eeeeee\"/>\n";
    }

    // swarm: stack points sharing a 3px bin, alternating above and below the row line
    std::map<std::pair<std::size_t, long>, int> occupancy;
    for (const auto& p : data.points) {
        const double x = xOf(p.phi);
        const int k = occupancy[{p.feature, std::lround(x / 3.0)}]++;
        const double offset = std::min(kRow / 2 - 2, 2.0 * ((k + 1) / 2)) * (k % 2 ? -1.0 : 1.0);
        const double y = kTop + kRow * static_cast<double>(p.feature) + kRow / 2 + offset;
        const double span = vmax[p.feature] - vmin[p.feature];
        const double t = span > 0 ? (p.value - vmin[p.feature]) / span : 0.5;
        s += "<circle cx=\"" + num(x) + "\" cy=\"" + num(y) + "\" r=\"2.5\" fill=\"" + colour(t) + "\" fill-opacity=\"0.85\"/>\n";
    }

    const double axisY = kTop + kRow * static_cast<double>(n) + 6;
    s += "<line x1=\"" + num(swarmX) + "\" y1=\"" + num(axisY) + "\" x2=\"" + num(swarmX + swarmW) + "\" y2=\"" + num(axisY) +
         "\" stroke=\"black\"/>\n";
    const double step = niceStep(hi - lo);
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-12; t += step) {
        const double x = xOf(t);
        s += "<line x1=\"" + num(x) + "\" y1=\"" + num(axisY) + "\" x2=\"" + num(x) + "\" y2=\"" + num(axisY + 4) +
             "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + num(x) + "\" y=\"" + num(axisY + 16) + "\" text-anchor=\"middle\">" +
             xmlEscape(formatDouble(std::abs(t) < step * 1e-9 ? 0.0 : std::round(t / step) * step)) + "</text>\n";
    }
    if (lo <= 0 && hi >= 0) {
        s += "<line x1=\"" + num(xOf(0)) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(xOf(0)) + "\" y2=\"" + num(axisY) +
             "\" stroke=\"#888888\" stroke-dasharray=\"3,3\"/>\n";
    }
    s += "<text x=\"" + num(swarmX + swarmW / 2) + "\" y=\"" + num(axisY + 34) +
         "\" text-anchor=\"middle\">SHAP value (impact on predicted credibility)</text>\n";
    s += "<text x=\"" + num(barX + kBarWidth / 2) + "\" y=\"" + num(axisY + 34) +
         "\" text-anchor=\"middle\">mean |SHAP value|</text>\n";
    s += "<text x=\"" + num(swarmX) + "\" y=\"" + num(kTop - 12) + "\" fill=\"" + colour(0) + "\">low feature value</text>\n";
    s += "<text x=\"" + num(swarmX + swarmW) + "\" y=\"" + num(kTop - 12) + "\" text-anchor=\"end\" fill=\"" + colour(1) +
         "\">high feature value</text>\n";
    s += "</svg>\n";
    return s;
}

}  // namespace credlens::pipeline
