#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace credlens::pipeline {

struct ShapPlotData {
    struct Point {
        std::size_t feature = 0;
        double phi = 0.0;
        double value = 0.0;
    };
    /// Rank order; meanAbs aligned with features.
    std::vector<std::string> features;
    std::vector<double> meanAbs;
    std::vector<Point> points;
};

/// Reads the summary (feature, mean_abs_shap, rank) and beeswarm
/// (feature, phi, feature_value, post_id) exports.
ShapPlotData shapPlotFromCsv(std::string_view summaryCsv, std::string_view beeswarmCsv);

/// Two panels: mean |SHAP| bars and a beeswarm with points coloured by the
/// feature value's position within that feature's range.
std::string renderShapSvg(const ShapPlotData& data, std::string_view title);

std::string xmlEscape(std::string_view text);

}  // namespace credlens::pipeline
