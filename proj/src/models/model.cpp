#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "credlens/common/parallel.hpp"
#include "credlens/models.hpp"

namespace credlens::models {

using nlohmann::json;

std::string_view modelKindName(ModelKind kind) {
    switch (kind) {
        case ModelKind::Ols: return "ols";
        case ModelKind::Lasso: return "lasso";
        case ModelKind::RandomForest: return "random_forest";
        case ModelKind::Gbdt: return "gbdt";
    }
    return "?";
}

std::optional<ModelKind> parseModelKind(std::string_view name) {
    for (auto k : {ModelKind::Ols, ModelKind::Lasso, ModelKind::RandomForest, ModelKind::Gbdt}) {
        if (modelKindName(k) == name) return k;
    }
    return std::nullopt;
}

double Model::predictRow(std::span<const double> x) const {
    if (!columnNames.empty() && x.size() != columnNames.size()) {
        throw ModelError("model expects " + std::to_string(columnNames.size()) + " columns, got " + std::to_string(x.size()));
    }
    return std::visit([&](const auto& m) { return m.predictRow(x); }, fitted);
}

std::vector<double> Model::predict(const DenseMatrix& X) const {
    if (!columnNames.empty() && X.cols() != columnNames.size()) {
        throw ModelError("model expects " + std::to_string(columnNames.size()) + " columns, got " + std::to_string(X.cols()));
    }
    std::vector<double> out(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) out[i] = predictRow(X.row(i));
    return out;
}

namespace {

const std::vector<std::string>& keysFor(ModelKind kind) {
    static const std::vector<std::string> ols{};
    static const std::vector<std::string> lasso{"lambda"};
    static const std::vector<std::string> rf{"n_trees", "max_depth", "min_samples_split", "min_samples_leaf",
                                             "max_features", "bootstrap"};
    static const std::vector<std::string> gbdt{"n_stages", "max_depth", "learning_rate", "subsample", "min_samples_leaf"};
    switch (kind) {
        case ModelKind::Ols: return ols;
        case ModelKind::Lasso: return lasso;
        case ModelKind::RandomForest: return rf;
        case ModelKind::Gbdt: return gbdt;
    }
    return ols;
}

void rejectUnknown(ModelKind kind, const json& hp) {
    if (!hp.is_object()) throw ModelError("hyperparameters must be an object");
    const auto& keys = keysFor(kind);
    for (const auto& [key, value] : hp.items()) {
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
            throw ModelError(std::string(modelKindName(kind)) + ": unknown hyperparameter '" + key + "'");
        }
    }
}

MaxFeatures parseMaxFeatures(const json& v) {
    MaxFeatures mf;
    if (v.is_string()) {
        if (v.get<std::string>() != "sqrt") throw ModelError("max_features must be a fraction or \"sqrt\"");
        mf.sqrt = true;
    } else {
        mf.fraction = v.get<double>();
    }
    return mf;
}

json maxFeaturesJson(const MaxFeatures& mf) { return mf.sqrt ? json("sqrt") : json(mf.fraction); }

ForestParams forestParams(const json& hp) {
    ForestParams p;
    p.nTrees = hp.value("n_trees", std::size_t{100});
    if (hp.contains("max_depth") && !hp["max_depth"].is_null()) p.tree.maxDepth = hp["max_depth"].get<int>();
    p.tree.minSamplesSplit = hp.value("min_samples_split", std::size_t{2});
    p.tree.minSamplesLeaf = hp.value("min_samples_leaf", std::size_t{1});
    if (hp.contains("max_features")) p.tree.maxFeatures = parseMaxFeatures(hp["max_features"]);
    p.bootstrap = hp.value("bootstrap", true);
    return p;
}

json forestJson(const ForestParams& p) {
    return {{"n_trees", p.nTrees},
            {"max_depth", p.tree.maxDepth ? json(*p.tree.maxDepth) : json(nullptr)},
            {"min_samples_split", p.tree.minSamplesSplit},
            {"min_samples_leaf", p.tree.minSamplesLeaf},
            {"max_features", maxFeaturesJson(p.tree.maxFeatures)},
            {"bootstrap", p.bootstrap}};
}

BoostParams boostParams(const json& hp) {
    BoostParams p;
    p.nStages = hp.value("n_stages", std::size_t{100});
    p.maxDepth = hp.value("max_depth", 3);
    p.learningRate = hp.value("learning_rate", 0.1);
    p.subsample = hp.value("subsample", 1.0);
    p.minSamplesLeaf = hp.value("min_samples_leaf", std::size_t{1});
    return p;
}

json boostJson(const BoostParams& p) {
    return {{"n_stages", p.nStages},
            {"max_depth", p.maxDepth},
            {"learning_rate", p.learningRate},
            {"subsample", p.subsample},
            {"min_samples_leaf", p.minSamplesLeaf}};
}

json treeJson(const RegressionTree& t) {
    json feature = json::array(), threshold = json::array(), left = json::array(), right = json::array(),
         value = json::array(), cover = json::array();
    for (const auto& n : t.nodes) {
        feature.push_back(n.feature);
        threshold.push_back(n.threshold);
        left.push_back(n.left);
        right.push_back(n.right);
        value.push_back(n.value);
        cover.push_back(n.cover);
    }
    return {{"feature", feature}, {"threshold", threshold}, {"left", left},
            {"right", right},     {"value", value},         {"cover", cover}};
}

RegressionTree treeFromJson(const json& j) {
    RegressionTree t;
    const auto& feature = j.at("feature");
    const std::size_t n = feature.size();
    for (const char* key : {"threshold", "left", "right", "value", "cover"}) {
        if (j.at(key).size() != n) throw ModelError(std::string("tree arrays differ in length at '") + key + "'");
    }
    for (std::size_t i = 0; i < n; ++i) {
        TreeNode node;
        node.feature = feature[i].get<int>();
        node.threshold = j["threshold"][i].get<double>();
        node.left = j["left"][i].get<int>();
        node.right = j["right"][i].get<int>();
        node.value = j["value"][i].get<double>();
        node.cover = j["cover"][i].get<double>();
        if (!node.leaf()) {
            const auto ok = [&](int c) { return c > static_cast<int>(i) && c < static_cast<int>(n); };
            if (!ok(node.left) || !ok(node.right)) throw ModelError("tree node " + std::to_string(i) + " has bad children");
        }
        t.nodes.push_back(node);
    }
    if (t.nodes.empty()) throw ModelError("tree has no nodes");
    return t;
}

json treesJson(const std::vector<RegressionTree>& trees) {
    json out = json::array();
    for (const auto& t : trees) out.push_back(treeJson(t));
    return out;
}

std::vector<RegressionTree> treesFromJson(const json& j) {
    std::vector<RegressionTree> out;
    for (const auto& t : j) out.push_back(treeFromJson(t));
    return out;
}

}  // namespace

Model fitModel(ModelKind kind, const json& hyperparams, const DenseMatrix& X, std::span<const double> y,
               std::uint64_t seed, std::vector<std::string> columnNames, std::size_t threads) {
    rejectUnknown(kind, hyperparams);
    if (!columnNames.empty() && columnNames.size() != X.cols()) throw ModelError("column names do not match X");
    Model m;
    m.kind = kind;
    m.seed = seed;
    m.columnNames = std::move(columnNames);
    try {
        switch (kind) {
            case ModelKind::Ols:
                m.fitted = fitOls(X, y);
                m.hyperparams = json::object();
                break;
            case ModelKind::Lasso: {
                const double lambda = hyperparams.value("lambda", 0.0);
                m.fitted = fitLasso(X, y, lambda);
                m.hyperparams = {{"lambda", lambda}};
                break;
            }
            case ModelKind::RandomForest: {
                const auto p = forestParams(hyperparams);
                m.fitted = fitRandomForest(X, y, p, seed, threads);
                m.hyperparams = forestJson(p);
                break;
            }
            case ModelKind::Gbdt: {
                const auto p = boostParams(hyperparams);
                m.fitted = fitGbdt(X, y, p, seed);
                m.hyperparams = boostJson(p);
                break;
            }
        }
    } catch (const json::exception& e) {
        throw ModelError(std::string(modelKindName(kind)) + ": bad hyperparameter: " + e.what());
    }
    return m;
}

json modelToJson(const Model& model) {
    json doc{{"kind", std::string(modelKindName(model.kind))},
             {"hyperparams", model.hyperparams},
             {"seed", model.seed},
             {"column_names", model.columnNames}};
    if (const auto* lin = std::get_if<LinearModel>(&model.fitted)) {
        doc["standardization"] = {{"means", lin->means}, {"sds", lin->sds}};
        doc["coefficients"] = {{"intercept", lin->intercept},   {"values", lin->coefficients},
                               {"lambda", lin->lambda},         {"converged", lin->converged},
                               {"iterations", lin->iterations}, {"jitter", lin->jitter}};
    } else if (const auto* rf = std::get_if<ForestModel>(&model.fitted)) {
        doc["trees"] = treesJson(rf->trees);
    } else if (const auto* gb = std::get_if<BoostedModel>(&model.fitted)) {
        doc["init"] = gb->init;
        doc["trees"] = treesJson(gb->trees);
    }
    return doc;
}

Model modelFromJson(const json& doc) {
    try {
        Model m;
        const auto kind = parseModelKind(doc.at("kind").get<std::string>());
        if (!kind) throw ModelError("unknown model kind '" + doc.at("kind").get<std::string>() + "'");
        m.kind = *kind;
        m.hyperparams = doc.at("hyperparams");
        rejectUnknown(m.kind, m.hyperparams);
        m.seed = doc.at("seed").get<std::uint64_t>();
        m.columnNames = doc.at("column_names").get<std::vector<std::string>>();
        switch (m.kind) {
            case ModelKind::Ols:
            case ModelKind::Lasso: {
                LinearModel lin;
                lin.kind = std::string(modelKindName(m.kind));
                const auto& c = doc.at("coefficients");
                lin.intercept = c.at("intercept").get<double>();
                lin.coefficients = c.at("values").get<std::vector<double>>();
                lin.lambda = c.at("lambda").get<double>();
                lin.converged = c.at("converged").get<bool>();
                lin.iterations = c.at("iterations").get<std::size_t>();
                lin.jitter = c.at("jitter").get<double>();
                lin.means = doc.at("standardization").at("means").get<std::vector<double>>();
                lin.sds = doc.at("standardization").at("sds").get<std::vector<double>>();
                m.fitted = std::move(lin);
                break;
            }
            case ModelKind::RandomForest: {
                ForestModel rf;
                rf.params = forestParams(m.hyperparams);
                rf.seed = m.seed;
                rf.trees = treesFromJson(doc.at("trees"));
                m.fitted = std::move(rf);
                break;
            }
            case ModelKind::Gbdt: {
                BoostedModel gb;
                gb.params = boostParams(m.hyperparams);
                gb.seed = m.seed;
                gb.init = doc.at("init").get<double>();
                gb.trees = treesFromJson(doc.at("trees"));
                m.fitted = std::move(gb);
                break;
            }
        }
        return m;
    } catch (const json::exception& e) {
        throw ModelError(std::string("malformed model artifact: ") + e.what());
    }
}

std::vector<json> expandGrid(ModelKind kind, const json& spec, const DenseMatrix& X, std::span<const double> y) {
    if (!spec.is_object()) throw ModelError("grid spec must be an object");
    json resolved = spec;
    if (kind == ModelKind::Lasso && spec.contains("lambda_path")) {
        if (spec.contains("lambda")) throw ModelError("lasso grid: give either lambda or lambda_path");
        const auto& path = spec["lambda_path"];
        for (const auto& [key, v] : path.items()) {
            if (key != "points" && key != "decades") throw ModelError("lambda_path: unknown key '" + key + "'");
        }
        resolved.erase("lambda_path");
        resolved["lambda"] = lassoPath(X, y, path.value("points", std::size_t{50}), path.value("decades", 4.0));
    }
    rejectUnknown(kind, resolved);
    std::vector<json> configs{json::object()};
    for (const auto& key : keysFor(kind)) {
        if (!resolved.contains(key)) continue;
        const auto& values = resolved[key];
        if (!values.is_array() || values.empty()) throw ModelError("grid values for '" + key + "' must be a non-empty list");
        std::vector<json> next;
        for (const auto& base : configs) {
            for (const auto& v : values) {
                json c = base;
                c[key] = v;
                next.push_back(std::move(c));
            }
        }
        configs = std::move(next);
    }
    return configs;
}

json defaultGridSpec(ModelKind kind) {
    switch (kind) {
        case ModelKind::Ols: return json::object();
        case ModelKind::Lasso: return {{"lambda_path", {{"points", 50}, {"decades", 4.0}}}};
        case ModelKind::RandomForest:
            return {{"n_trees", {100, 300, 500}},
                    {"max_depth", {nullptr, 5, 10, 20}},
                    {"min_samples_split", {2, 5, 10}},
                    {"min_samples_leaf", {1, 2, 5}},
                    {"max_features", {1.0, "sqrt"}}};
        case ModelKind::Gbdt:
            return {{"n_stages", {100, 300, 500}},
                    {"max_depth", {2, 3, 5}},
                    {"learning_rate", {0.01, 0.05, 0.1}},
                    {"subsample", {0.7, 1.0}},
                    {"min_samples_leaf", {1, 5}}};
    }
    return json::object();
}

double rSquared(std::span<const double> yTrue, std::span<const double> yPred) {
    if (yTrue.size() != yPred.size() || yTrue.empty()) throw ModelError("r squared needs equal, non-empty inputs");
    double mean = 0.0;
    for (double v : yTrue) mean += v;
    mean /= static_cast<double>(yTrue.size());
    double ssRes = 0.0, ssTot = 0.0;
    for (std::size_t i = 0; i < yTrue.size(); ++i) {
        ssRes += (yTrue[i] - yPred[i]) * (yTrue[i] - yPred[i]);
        ssTot += (yTrue[i] - mean) * (yTrue[i] - mean);
    }
    if (!(ssTot > 0.0)) throw ModelError("r squared undefined: constant target");
    return 1.0 - ssRes / ssTot;
}

GridSearchResult gridSearch(ModelKind kind, const std::vector<json>& grid, const DenseMatrix& Xtrain,
                            std::span<const double> ytrain, const DenseMatrix& Xval, std::span<const double> yval,
                            std::uint64_t seed, std::vector<std::string> columnNames, std::size_t threads) {
    if (grid.empty()) throw ModelError("empty hyperparameter grid");
    if (Xtrain.cols() != Xval.cols()) throw ModelError("train and validation column counts differ");
    GridSearchResult result;
    result.kind = kind;
    std::vector<double> scores(grid.size());
    parallelFor(grid.size(), threads, [&](std::size_t i) {
        const auto model = fitModel(kind, grid[i], Xtrain, ytrain, seed, columnNames, 1);
        scores[i] = rSquared(yval, model.predict(Xval));
    });
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        result.evaluated.emplace_back(grid[i], scores[i]);
        if (scores[i] > best) {
            best = scores[i];
            result.bestIndex = i;
        }
    }

    DenseMatrix combined(Xtrain.rows() + Xval.rows(), Xtrain.cols());
    std::vector<double> ycombined(ytrain.begin(), ytrain.end());
    ycombined.insert(ycombined.end(), yval.begin(), yval.end());
    for (std::size_t i = 0; i < Xtrain.rows(); ++i) std::copy(Xtrain.row(i).begin(), Xtrain.row(i).end(), combined.row(i).begin());
    for (std::size_t i = 0; i < Xval.rows(); ++i)
        std::copy(Xval.row(i).begin(), Xval.row(i).end(), combined.row(Xtrain.rows() + i).begin());
    result.model = fitModel(kind, grid[result.bestIndex], combined, ycombined, seed, std::move(columnNames), threads);
    return result;
}

}  // namespace credlens::models
