#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "credlens/common/error.hpp"
#include "credlens/common/matrix.hpp"

namespace credlens::models {

class ModelError : public Error {
public:
    using Error::Error;
};

struct LinearModel {
    std::string kind = "ols";  // ols | lasso
    double lambda = 0.0;
    double intercept = 0.0;
    /// Original-scale coefficients; zero for zero-variance columns.
    std::vector<double> coefficients;
    /// Train means / population sds used for internal standardization.
    std::vector<double> means;
    std::vector<double> sds;
    bool converged = true;
    std::size_t iterations = 0;
    /// Diagonal jitter added to a singular Gram matrix (OLS only).
    double jitter = 0.0;

    double predictRow(std::span<const double> x) const;
};

LinearModel fitOls(const DenseMatrix& X, std::span<const double> y);

struct LassoOptions {
    double tol = 1e-7;
    std::size_t maxIter = 100000;
};

/// Minimizes (1/2n)|y - Zb|^2 + lambda |b|_1 on standardized columns Z by
/// cyclic coordinate descent.
LinearModel fitLasso(const DenseMatrix& X, std::span<const double> y, double lambda, const LassoOptions& options = {});

/// Smallest lambda with an all-zero solution: max_j |z_j'(y - ybar)| / n.
double lassoLambdaMax(const DenseMatrix& X, std::span<const double> y);
/// `points` log-spaced values from lambdaMax down `decades` decades.
std::vector<double> lassoPath(const DenseMatrix& X, std::span<const double> y, std::size_t points = 50,
                              double decades = 4.0);

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
    /// Training samples (bootstrap draws included) reaching the node.
    double cover = 0.0;

    bool leaf() const { return feature < 0; }
};

struct RegressionTree {
    std::vector<TreeNode> nodes;  // root at 0

    double predictRow(std::span<const double> x) const;
    std::size_t depth() const;
};

struct MaxFeatures {
    bool sqrt = false;
    double fraction = 1.0;

    std::size_t count(std::size_t columns) const;
};

struct TreeParams {
    std::optional<int> maxDepth;
    std::size_t minSamplesSplit = 2;
    std::size_t minSamplesLeaf = 1;
    MaxFeatures maxFeatures;

    void validate() const;
};

/// CART regression tree on the given rows (duplicates allowed). Splits
/// maximize the reduction in squared error; thresholds are midpoints of
/// consecutive distinct values and x <= threshold goes left. Ties keep the
/// lowest column, then the lowest threshold. Each node draws its candidate
/// columns from a generator seeded by its path from the root, so a deeper
/// limit only refines a shallower tree.
RegressionTree fitTree(const DenseMatrix& X, std::span<const double> y, std::span<const std::size_t> rows,
                       const TreeParams& params, std::uint64_t seed);

struct ForestParams {
    std::size_t nTrees = 100;
    TreeParams tree;
    bool bootstrap = true;
};

struct ForestModel {
    ForestParams params;
    std::uint64_t seed = 0;
    std::vector<RegressionTree> trees;

    double predictRow(std::span<const double> x) const;
};

ForestModel fitRandomForest(const DenseMatrix& X, std::span<const double> y, const ForestParams& params,
                            std::uint64_t seed, std::size_t threads = 1);

struct BoostParams {
    std::size_t nStages = 100;
    int maxDepth = 3;
    double learningRate = 0.1;
    double subsample = 1.0;
    std::size_t minSamplesLeaf = 1;

    void validate() const;
};

struct BoostedModel {
    BoostParams params;
    std::uint64_t seed = 0;
    double init = 0.0;
    std::vector<RegressionTree> trees;

    double predictRow(std::span<const double> x) const;
};

BoostedModel fitGbdt(const DenseMatrix& X, std::span<const double> y, const BoostParams& params, std::uint64_t seed);

enum class ModelKind { Ols, Lasso, RandomForest, Gbdt };
std::string_view modelKindName(ModelKind kind);
std::optional<ModelKind> parseModelKind(std::string_view name);

struct Model {
    ModelKind kind = ModelKind::Ols;
    nlohmann::json hyperparams = nlohmann::json::object();
    std::uint64_t seed = 0;
    std::vector<std::string> columnNames;
    std::variant<LinearModel, ForestModel, BoostedModel> fitted;

    /// Throws ModelError when the column count differs from training.
    std::vector<double> predict(const DenseMatrix& X) const;
    double predictRow(std::span<const double> x) const;
};

/// Fits one configuration: ols `{}`, lasso `{lambda}`, random_forest
/// `{n_trees, max_depth|null, min_samples_split, min_samples_leaf,
/// max_features: fraction|"sqrt", bootstrap}`, gbdt `{n_stages, max_depth,
/// learning_rate, subsample, min_samples_leaf}`. Missing keys take defaults.
Model fitModel(ModelKind kind, const nlohmann::json& hyperparams, const DenseMatrix& X, std::span<const double> y,
               std::uint64_t seed, std::vector<std::string> columnNames = {}, std::size_t threads = 1);

nlohmann::json modelToJson(const Model& model);
Model modelFromJson(const nlohmann::json& doc);

/// Cartesian product of a grid spec `{key: [values...]}` in the kind's
/// canonical key order, last key varying fastest. For lasso the grid spec may
/// instead give `lambda_path: {points, decades}`, resolved on (X, y).
std::vector<nlohmann::json> expandGrid(ModelKind kind, const nlohmann::json& spec, const DenseMatrix& X,
                                       std::span<const double> y);
nlohmann::json defaultGridSpec(ModelKind kind);

struct GridSearchResult {
    ModelKind kind = ModelKind::Ols;
    std::vector<std::pair<nlohmann::json, double>> evaluated;  // (config, validation R^2)
    std::size_t bestIndex = 0;
    /// Winner refit on train + validation.
    Model model;

    const nlohmann::json& best() const { return evaluated[bestIndex].first; }
};

/// Fits each config on train, scores R^2 on validation (earliest config
/// wins ties), then refits the winner on the union of both.
GridSearchResult gridSearch(ModelKind kind, const std::vector<nlohmann::json>& grid, const DenseMatrix& Xtrain,
                            std::span<const double> ytrain, const DenseMatrix& Xval, std::span<const double> yval,
                            std::uint64_t seed, std::vector<std::string> columnNames = {}, std::size_t threads = 1);

/// 1 - SS_res / SS_tot with the mean of yTrue; throws when yTrue is constant.
double rSquared(std::span<const double> yTrue, std::span<const double> yPred);

}  // namespace credlens::models
