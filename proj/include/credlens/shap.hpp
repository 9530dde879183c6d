#pragma once

#include <span>
#include <string>
#include <vector>

#include "credlens/common/error.hpp"
#include "credlens/models.hpp"

namespace credlens::shap {

class ShapError : public Error {
public:
    using Error::Error;
};

struct ShapRow {
    std::string postId;
    std::vector<double> phi;
    double baseValue = 0.0;
    double prediction = 0.0;
};

/// Cover-weighted mean leaf value.
double expectedValue(const models::RegressionTree& tree);

/// E[f(x) | x_S] with features outside S resolved by descending both
/// children in proportion to their covers.
double conditionalExpectation(const models::RegressionTree& tree, std::span<const double> x,
                              const std::vector<bool>& known);

/// Path-dependent TreeSHAP for one tree; one phi per entry of x.
std::vector<double> treeShap(const models::RegressionTree& tree, std::span<const double> x);

/// Forests average tree attributions; boosted models scale them by the
/// learning rate and add the initial prediction to the base value.
ShapRow treeShap(const models::ForestModel& model, std::span<const double> x);
ShapRow treeShap(const models::BoostedModel& model, std::span<const double> x);
/// Throws ShapError for linear models or a column mismatch.
ShapRow treeShap(const models::Model& model, std::span<const double> x);

/// Exact attributions of a linear model against its training means:
/// phi_j = beta_j (x_j - mean_j), base = f(mean).
ShapRow linearShap(const models::LinearModel& model, std::span<const double> x);
/// TreeSHAP for ensembles, linearShap for OLS / LASSO.
ShapRow explainRow(const models::Model& model, std::span<const double> x);

inline constexpr std::size_t kBruteForceMaxFeatures = 12;

/// Shapley values by enumerating all feature subsets against
/// conditionalExpectation. At most kBruteForceMaxFeatures columns.
std::vector<double> bruteForceShap(const models::RegressionTree& tree, std::span<const double> x);
std::vector<double> bruteForceShap(const models::ForestModel& model, std::span<const double> x);
std::vector<double> bruteForceShap(const models::BoostedModel& model, std::span<const double> x);

/// One row per matrix row; rows are independent and computed in parallel.
std::vector<ShapRow> explainRows(const models::Model& model, const DenseMatrix& X, const std::vector<std::string>& ids,
                                 std::size_t threads = 1);

struct FeatureImportance {
    std::string feature;
    double meanAbsShap = 0.0;
    std::size_t rank = 0;  // 1-based
};

struct BeeswarmPoint {
    std::string feature;
    double phi = 0.0;
    double featureValue = 0.0;
    std::string postId;
};

struct ShapSummary {
    /// Descending mean |phi|, ties by feature name.
    std::vector<FeatureImportance> ranking;
    /// Grouped by feature in ranking order, rows in input order.
    std::vector<BeeswarmPoint> beeswarm;
};

/// `values` holds the explained rows' feature values, aligned with `rows`.
ShapSummary shapSummary(const std::vector<ShapRow>& rows, const std::vector<std::string>& columns,
                        const DenseMatrix& values);
/// Keeps the first `k` ranked features and their beeswarm points.
ShapSummary topFeatures(const ShapSummary& summary, std::size_t k);

std::string summaryCsv(const ShapSummary& summary);
std::string beeswarmCsv(const ShapSummary& summary);
/// post_id, base_value, prediction, then one phi column per feature.
std::string shapRowsCsv(const std::vector<ShapRow>& rows, const std::vector<std::string>& columns);

}  // namespace credlens::shap
