#include "credlens/shap.hpp"

#include <algorithm>
#include <cmath>

#include "credlens/common/csv.hpp"
#include "credlens/common/io.hpp"
#include "credlens/common/parallel.hpp"

namespace credlens::shap {

using models::RegressionTree;
using models::TreeNode;

namespace {

void checkTree(const RegressionTree& tree, std::size_t columns) {
    if (tree.nodes.empty()) throw ShapError("empty tree");
    for (const auto& n : tree.nodes) {
        if (!(n.cover > 0.0)) throw ShapError("tree node without a positive cover");
        if (!n.leaf() && static_cast<std::size_t>(n.feature) >= columns) {
            throw ShapError("tree splits on column " + std::to_string(n.feature) + " but the row has " +
                            std::to_string(columns));
        }
    }
}

const TreeNode& child(const RegressionTree& t, int index) { return t.nodes[static_cast<std::size_t>(index)]; }

struct PathElement {
    int feature = -1;
    double zero = 0.0;  // fraction of "feature unknown" paths flowing through
    double one = 0.0;   // 1 if x follows this branch
    double weight = 0.0;
};

using Path = std::vector<PathElement>;

void extendPath(Path& path, std::size_t depth, double zero, double one, int feature) {
    path[depth] = {feature, zero, one, depth == 0 ? 1.0 : 0.0};
    const double d1 = static_cast<double>(depth + 1);
    for (std::size_t i = depth; i-- > 0;) {
        path[i + 1].weight += one * path[i].weight * static_cast<double>(i + 1) / d1;
        path[i].weight = zero * path[i].weight * static_cast<double>(depth - i) / d1;
    }
}

void unwindPath(Path& path, std::size_t depth, std::size_t index) {
    const double one = path[index].one, zero = path[index].zero;
    const double d1 = static_cast<double>(depth + 1);
    double next = path[depth].weight;
    for (std::size_t i = depth; i-- > 0;) {
        if (one != 0.0) {
            const double t = path[i].weight;
            path[i].weight = next * d1 / (static_cast<double>(i + 1) * one);
            next = t - path[i].weight * zero * static_cast<double>(depth - i) / d1;
        } else {
            path[i].weight = path[i].weight * d1 / (zero * static_cast<double>(depth - i));
        }
    }
    for (std::size_t i = index; i < depth; ++i) {
        path[i].feature = path[i + 1].feature;
        path[i].zero = path[i + 1].zero;
        path[i].one = path[i + 1].one;
    }
}

double unwoundSum(const Path& path, std::size_t depth, std::size_t index) {
    const double one = path[index].one, zero = path[index].zero;
    const double d1 = static_cast<double>(depth + 1);
    double next = path[depth].weight, total = 0.0;
    for (std::size_t i = depth; i-- > 0;) {
        if (one != 0.0) {
            const double t = next * d1 / (static_cast<double>(i + 1) * one);
            total += t;
            next = path[i].weight - t * zero * static_cast<double>(depth - i) / d1;
        } else {
            total += path[i].weight / zero / (static_cast<double>(depth - i) / d1);
        }
    }
    return total;
}

void recurse(const RegressionTree& tree, std::span<const double> x, std::vector<double>& phi, int nodeIndex, Path path,
             std::size_t depth, double zero, double one, int feature) {
    if (path.size() < depth + 1) path.resize(depth + 1);
    extendPath(path, depth, zero, one, feature);
    const auto& node = tree.nodes[static_cast<std::size_t>(nodeIndex)];
    if (node.leaf()) {
        for (std::size_t i = 1; i <= depth; ++i) {
            const double w = unwoundSum(path, depth, i);
            phi[static_cast<std::size_t>(path[i].feature)] += w * (path[i].one - path[i].zero) * node.value;
        }
        return;
    }
    const int hot = x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
    const int cold = hot == node.left ? node.right : node.left;
    double incomingZero = 1.0, incomingOne = 1.0;
    for (std::size_t k = 1; k <= depth; ++k) {
        if (path[k].feature == node.feature) {
            incomingZero = path[k].zero;
            incomingOne = path[k].one;
            unwindPath(path, depth, k);
            --depth;
            break;
        }
    }
    recurse(tree, x, phi, hot, path, depth + 1, incomingZero * child(tree, hot).cover / node.cover, incomingOne,
            node.feature);
    recurse(tree, x, phi, cold, path, depth + 1, incomingZero * child(tree, cold).cover / node.cover, 0.0,
            node.feature);
}

double expectationAt(const RegressionTree& tree, std::span<const double> x, const std::vector<bool>& known, int index) {
    const auto& node = tree.nodes[static_cast<std::size_t>(index)];
    if (node.leaf()) return node.value;
    const auto f = static_cast<std::size_t>(node.feature);
    if (known[f]) return expectationAt(tree, x, known, x[f] <= node.threshold ? node.left : node.right);
    return (child(tree, node.left).cover * expectationAt(tree, x, known, node.left) +
            child(tree, node.right).cover * expectationAt(tree, x, known, node.right)) /
           node.cover;
}

/// Enumerates subsets of d features; v maps a mask to the model expectation.
template <class V>
std::vector<double> shapleyByEnumeration(std::size_t d, V&& v) {
    if (d > kBruteForceMaxFeatures) {
        throw ShapError("brute-force Shapley supports at most " + std::to_string(kBruteForceMaxFeatures) + " features, got " +
                        std::to_string(d));
    }
    const std::size_t subsets = std::size_t{1} << d;
    std::vector<double> value(subsets);
    std::vector<bool> known(d);
    for (std::size_t s = 0; s < subsets; ++s) {
        for (std::size_t j = 0; j < d; ++j) known[j] = (s >> j) & 1U;
        value[s] = v(known);
    }
    std::vector<double> fact(d + 1, 1.0);
    for (std::size_t k = 1; k <= d; ++k) fact[k] = fact[k - 1] * static_cast<double>(k);
    std::vector<double> phi(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        const std::size_t bit = std::size_t{1} << i;
        for (std::size_t s = 0; s < subsets; ++s) {
            if (s & bit) continue;
            const auto size = static_cast<std::size_t>(__builtin_popcountll(s));
            const double w = fact[size] * fact[d - size - 1] / fact[d];
            phi[i] += w * (value[s | bit] - value[s]);
        }
    }
    return phi;
}

}  // namespace

double expectedValue(const RegressionTree& tree) {
    if (tree.nodes.empty()) throw ShapError("empty tree");
    double total = 0.0;
    for (const auto& n : tree.nodes)
        if (n.leaf()) total += n.value * n.cover;
    return total / tree.nodes[0].cover;
}

double conditionalExpectation(const RegressionTree& tree, std::span<const double> x, const std::vector<bool>& known) {
    checkTree(tree, x.size());
    if (known.size() != x.size()) throw ShapError("subset mask does not match the row");
    return expectationAt(tree, x, known, 0);
}

std::vector<double> treeShap(const RegressionTree& tree, std::span<const double> x) {
    checkTree(tree, x.size());
    std::vector<double> phi(x.size(), 0.0);
    recurse(tree, x, phi, 0, Path(tree.depth() + 2), 0, 1.0, 1.0, -1);
    return phi;
}

ShapRow treeShap(const models::ForestModel& model, std::span<const double> x) {
    if (model.trees.empty()) throw ShapError("forest has no trees");
    ShapRow row;
    row.phi.assign(x.size(), 0.0);
    const double scale = 1.0 / static_cast<double>(model.trees.size());
    for (const auto& t : model.trees) {
        const auto phi = treeShap(t, x);
        for (std::size_t j = 0; j < x.size(); ++j) row.phi[j] += phi[j];
        row.baseValue += expectedValue(t);
    }
    for (auto& v : row.phi) v *= scale;
    row.baseValue *= scale;
    row.prediction = model.predictRow(x);
    return row;
}

ShapRow treeShap(const models::BoostedModel& model, std::span<const double> x) {
    ShapRow row;
    row.phi.assign(x.size(), 0.0);
    double base = 0.0;
    for (const auto& t : model.trees) {
        const auto phi = treeShap(t, x);
        for (std::size_t j = 0; j < x.size(); ++j) row.phi[j] += phi[j];
        base += expectedValue(t);
    }
    for (auto& v : row.phi) v *= model.params.learningRate;
    row.baseValue = model.init + model.params.learningRate * base;
    row.prediction = model.predictRow(x);
    return row;
}

ShapRow treeShap(const models::Model& model, std::span<const double> x) {
    if (!model.columnNames.empty() && x.size() != model.columnNames.size()) {
        throw ShapError("row has " + std::to_string(x.size()) + " columns, model expects " +
                        std::to_string(model.columnNames.size()));
    }
    if (const auto* rf = std::get_if<models::ForestModel>(&model.fitted)) return treeShap(*rf, x);
    if (const auto* gb = std::get_if<models::BoostedModel>(&model.fitted)) return treeShap(*gb, x);
    throw ShapError("TreeSHAP needs a tree ensemble, got " + std::string(models::modelKindName(model.kind)));
}

ShapRow linearShap(const models::LinearModel& model, std::span<const double> x) {
    if (x.size() != model.coefficients.size() || model.means.size() != model.coefficients.size()) {
        throw ShapError("row has " + std::to_string(x.size()) + " columns, linear model has " +
                        std::to_string(model.coefficients.size()));
    }
    ShapRow row;
    row.phi.resize(x.size());
    row.baseValue = model.intercept;
    for (std::size_t j = 0; j < x.size(); ++j) {
        row.phi[j] = model.coefficients[j] * (x[j] - model.means[j]);
        row.baseValue += model.coefficients[j] * model.means[j];
    }
    row.prediction = model.predictRow(x);
    return row;
}

ShapRow explainRow(const models::Model& model, std::span<const double> x) {
    if (const auto* lin = std::get_if<models::LinearModel>(&model.fitted)) {
        if (!model.columnNames.empty() && x.size() != model.columnNames.size()) {
            throw ShapError("row has " + std::to_string(x.size()) + " columns, model expects " +
                            std::to_string(model.columnNames.size()));
        }
        return linearShap(*lin, x);
    }
    return treeShap(model, x);
}

std::vector<double> bruteForceShap(const RegressionTree& tree, std::span<const double> x) {
    checkTree(tree, x.size());
    return shapleyByEnumeration(x.size(), [&](const std::vector<bool>& known) { return expectationAt(tree, x, known, 0); });
}

std::vector<double> bruteForceShap(const models::ForestModel& model, std::span<const double> x) {
    for (const auto& t : model.trees) checkTree(t, x.size());
    return shapleyByEnumeration(x.size(), [&](const std::vector<bool>& known) {
        double s = 0.0;
        for (const auto& t : model.trees) s += expectationAt(t, x, known, 0);
        return s / static_cast<double>(model.trees.size());
    });
}

std::vector<double> bruteForceShap(const models::BoostedModel& model, std::span<const double> x) {
    for (const auto& t : model.trees) checkTree(t, x.size());
    return shapleyByEnumeration(x.size(), [&](const std::vector<bool>& known) {
        double s = 0.0;
        for (const auto& t : model.trees) s += expectationAt(t, x, known, 0);
        return model.init + model.params.learningRate * s;
    });
}

std::vector<ShapRow> explainRows(const models::Model& model, const DenseMatrix& X, const std::vector<std::string>& ids,
                                 std::size_t threads) {
    if (ids.size() != X.rows()) throw ShapError("row ids do not match the matrix");
    std::vector<ShapRow> out(X.rows());
    parallelFor(X.rows(), threads, [&](std::size_t i) {
        out[i] = explainRow(model, X.row(i));
        out[i].postId = ids[i];
    });
    return out;
}

ShapSummary shapSummary(const std::vector<ShapRow>& rows, const std::vector<std::string>& columns,
                        const DenseMatrix& values) {
    if (rows.empty()) throw ShapError("SHAP summary needs at least one row");
    if (values.rows() != rows.size() || values.cols() != columns.size()) throw ShapError("feature values do not match the SHAP rows");
    ShapSummary s;
    for (std::size_t j = 0; j < columns.size(); ++j) {
        double total = 0.0;
        for (const auto& r : rows) {
            if (r.phi.size() != columns.size()) throw ShapError("SHAP row width does not match the columns");
            total += std::abs(r.phi[j]);
        }
        s.ranking.push_back({columns[j], total / static_cast<double>(rows.size()), 0});
    }
    std::vector<std::size_t> order(columns.size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (s.ranking[a].meanAbsShap != s.ranking[b].meanAbsShap) return s.ranking[a].meanAbsShap > s.ranking[b].meanAbsShap;
        return s.ranking[a].feature < s.ranking[b].feature;
    });
    std::vector<FeatureImportance> ranked;
    for (std::size_t k = 0; k < order.size(); ++k) {
        ranked.push_back(s.ranking[order[k]]);
        ranked.back().rank = k + 1;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            s.beeswarm.push_back({columns[order[k]], rows[i].phi[order[k]], values(i, order[k]), rows[i].postId});
        }
    }
    s.ranking = std::move(ranked);
    return s;
}

ShapSummary topFeatures(const ShapSummary& summary, std::size_t k) {
    ShapSummary out;
    out.ranking.assign(summary.ranking.begin(), summary.ranking.begin() + static_cast<long>(std::min(k, summary.ranking.size())));
    for (const auto& p : summary.beeswarm) {
        if (std::any_of(out.ranking.begin(), out.ranking.end(), [&](const auto& f) { return f.feature == p.feature; })) {
            out.beeswarm.push_back(p);
        }
    }
    return out;
}

std::string summaryCsv(const ShapSummary& summary) {
    std::string out = csv::formatRow({"feature", "mean_abs_shap", "rank"});
    for (const auto& f : summary.ranking) out += csv::formatRow({f.feature, formatDouble(f.meanAbsShap), std::to_string(f.rank)});
    return out;
}

std::string beeswarmCsv(const ShapSummary& summary) {
    std::string out = csv::formatRow({"feature", "phi", "feature_value", "post_id"});
    for (const auto& p : summary.beeswarm) {
        out += csv::formatRow({p.feature, formatDouble(p.phi), formatDouble(p.featureValue), p.postId});
    }
    return out;
}

std::string shapRowsCsv(const std::vector<ShapRow>& rows, const std::vector<std::string>& columns) {
    csv::Row header{"post_id", "base_value", "prediction"};
    header.insert(header.end(), columns.begin(), columns.end());
    std::string out = csv::formatRow(header);
    for (const auto& r : rows) {
        csv::Row line{r.postId, formatDouble(r.baseValue), formatDouble(r.prediction)};
        for (double v : r.phi) line.push_back(formatDouble(v));
        out += csv::formatRow(line);
    }
    return out;
}

}  // namespace credlens::shap
