#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "credlens/common/parallel.hpp"
#include "credlens/common/rng.hpp"
#include "credlens/models.hpp"

namespace credlens::models {

std::size_t MaxFeatures::count(std::size_t columns) const {
    if (columns == 0) return 0;
    const double raw = sqrt ? std::sqrt(static_cast<double>(columns)) : fraction * static_cast<double>(columns);
    return std::clamp<std::size_t>(static_cast<std::size_t>(raw), 1, columns);
}

void TreeParams::validate() const {
    if (maxDepth && *maxDepth < 0) throw ModelError("max_depth must be >= 0");
    if (minSamplesSplit < 2) throw ModelError("min_samples_split must be >= 2");
    if (minSamplesLeaf < 1) throw ModelError("min_samples_leaf must be >= 1");
    if (!maxFeatures.sqrt && !(maxFeatures.fraction > 0.0 && maxFeatures.fraction <= 1.0)) {
        throw ModelError("max_features fraction must be in (0, 1]");
    }
}

void BoostParams::validate() const {
    if (maxDepth < 0) throw ModelError("max_depth must be >= 0");
    if (!(learningRate > 0.0 && learningRate <= 1.0)) throw ModelError("learning_rate must be in (0, 1]");
    if (!(subsample > 0.0 && subsample <= 1.0)) throw ModelError("subsample must be in (0, 1]");
    if (minSamplesLeaf < 1) throw ModelError("min_samples_leaf must be >= 1");
}

double RegressionTree::predictRow(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes[i].leaf()) {
        const auto& node = nodes[i];
        i = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right);
    }
    return nodes[i].value;
}

std::size_t RegressionTree::depth() const {
    std::vector<std::size_t> d(nodes.size(), 0);
    std::size_t best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        best = std::max(best, d[i]);
        if (!nodes[i].leaf()) {
            d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
            d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
        }
    }
    return best;
}

namespace {

struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = -std::numeric_limits<double>::infinity();
};

class TreeBuilder {
public:
    TreeBuilder(const DenseMatrix& X, std::span<const double> y, const TreeParams& params)
        : X_(X), y_(y), params_(params), k_(params.maxFeatures.count(X.cols())) {}

    RegressionTree build(std::vector<std::size_t> rows, std::uint64_t seed) {
        grow(rows, 0, seed);
        return std::move(tree_);
    }

private:
    int grow(std::vector<std::size_t>& rows, int depth, std::uint64_t seed) {
        const int index = static_cast<int>(tree_.nodes.size());
        double sum = 0.0;
        for (auto r : rows) sum += y_[r];
        TreeNode node;
        node.value = sum / static_cast<double>(rows.size());
        node.cover = static_cast<double>(rows.size());
        tree_.nodes.push_back(node);

        const bool depthLeft = !params_.maxDepth || depth < *params_.maxDepth;
        const bool constant = std::all_of(rows.begin(), rows.end(), [&](auto r) { return y_[r] == y_[rows[0]]; });
        if (!depthLeft || constant || rows.size() < params_.minSamplesSplit || rows.size() < 2 * params_.minSamplesLeaf) {
            return index;
        }
        const Split split = bestSplit(rows, sum, seed);
        if (split.feature < 0) return index;

        std::vector<std::size_t> left, right;
        for (auto r : rows) (X_(r, static_cast<std::size_t>(split.feature)) <= split.threshold ? left : right).push_back(r);
        rows.clear();
        rows.shrink_to_fit();
        const int l = grow(left, depth + 1, mixSeed(seed, 1));
        const int r = grow(right, depth + 1, mixSeed(seed, 2));
        auto& self = tree_.nodes[static_cast<std::size_t>(index)];
        self.feature = split.feature;
        self.threshold = split.threshold;
        self.left = l;
        self.right = r;
        return index;
    }

    Split bestSplit(const std::vector<std::size_t>& rows, double total, std::uint64_t seed) {
        std::vector<std::size_t> order(X_.cols());
        std::iota(order.begin(), order.end(), 0);
        if (k_ < order.size()) {
            Rng rng(seed);
            rng.shuffle(order);
        }
        Split best;
        std::size_t evaluated = 0;
        for (auto f : order) {
            if (evaluated >= k_ && best.feature >= 0) break;
            if (evaluateFeature(rows, total, f, best)) ++evaluated;
        }
        return best;
    }

    /// Returns false for a feature constant on these rows.
    bool evaluateFeature(const std::vector<std::size_t>& rows, double total, std::size_t f, Split& best) {
        sorted_.clear();
        for (auto r : rows) sorted_.emplace_back(X_(r, f), y_[r]);
        std::sort(sorted_.begin(), sorted_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        if (sorted_.front().first == sorted_.back().first) return false;
        const std::size_t n = sorted_.size();
        const double nd = static_cast<double>(n);
        double leftSum = 0.0;
        for (std::size_t i = 1; i < n; ++i) {
            leftSum += sorted_[i - 1].second;
            const double a = sorted_[i - 1].first, b = sorted_[i].first;
            if (a == b || i < params_.minSamplesLeaf || n - i < params_.minSamplesLeaf) continue;
            const double nl = static_cast<double>(i), nr = nd - nl;
            const double rightSum = total - leftSum;
            const double gain = leftSum * leftSum / nl + rightSum * rightSum / nr - total * total / nd;
            double threshold = a + (b - a) / 2.0;
            if (!(threshold < b)) threshold = a;
            const int fi = static_cast<int>(f);
            const bool better = gain > best.gain ||
                                (gain == best.gain && (fi < best.feature || (fi == best.feature && threshold < best.threshold)));
            if (better) best = {fi, threshold, gain};
        }
        return true;
    }

    const DenseMatrix& X_;
    std::span<const double> y_;
    const TreeParams& params_;
    std::size_t k_;
    RegressionTree tree_;
    std::vector<std::pair<double, double>> sorted_;
};

void checkData(const DenseMatrix& X, std::span<const double> y) {
    if (X.rows() != y.size()) throw ModelError("X has " + std::to_string(X.rows()) + " rows but y has " + std::to_string(y.size()));
    if (X.rows() == 0) throw ModelError("no training rows");
    for (double v : X.data())
        if (!std::isfinite(v)) throw ModelError("non-finite value in X");
    for (double v : y)
        if (!std::isfinite(v)) throw ModelError("non-finite value in y");
}

}  // namespace

RegressionTree fitTree(const DenseMatrix& X, std::span<const double> y, std::span<const std::size_t> rows,
                       const TreeParams& params, std::uint64_t seed) {
    params.validate();
    if (rows.empty()) throw ModelError("tree needs at least one row");
    return TreeBuilder(X, y, params).build(std::vector<std::size_t>(rows.begin(), rows.end()), seed);
}

double ForestModel::predictRow(std::span<const double> x) const {
    double sum = 0.0;
    for (const auto& t : trees) sum += t.predictRow(x);
    return sum / static_cast<double>(trees.size());
}

ForestModel fitRandomForest(const DenseMatrix& X, std::span<const double> y, const ForestParams& params,
                            std::uint64_t seed, std::size_t threads) {
    checkData(X, y);
    params.tree.validate();
    if (params.nTrees == 0) throw ModelError("n_trees must be >= 1");
    if (X.rows() < params.tree.minSamplesSplit) throw ModelError("fewer rows than min_samples_split");
    ForestModel model;
    model.params = params;
    model.seed = seed;
    model.trees.resize(params.nTrees);
    const std::size_t n = X.rows();
    parallelFor(params.nTrees, threads, [&](std::size_t t) {
        const std::uint64_t treeSeed = mixSeed(seed, t);
        std::vector<std::size_t> rows(n);
        if (params.bootstrap) {
            Rng rng(treeSeed);
            for (auto& r : rows) r = static_cast<std::size_t>(rng.uniformBelow(n));
            std::sort(rows.begin(), rows.end());
        } else {
            std::iota(rows.begin(), rows.end(), 0);
        }
        model.trees[t] = fitTree(X, y, rows, params.tree, mixSeed(treeSeed, 0x7EE));
    });
    return model;
}

double BoostedModel::predictRow(std::span<const double> x) const {
    double sum = 0.0;
    for (const auto& t : trees) sum += t.predictRow(x);
    return init + params.learningRate * sum;
}

BoostedModel fitGbdt(const DenseMatrix& X, std::span<const double> y, const BoostParams& params, std::uint64_t seed) {
    checkData(X, y);
    params.validate();
    const std::size_t n = X.rows();
    BoostedModel model;
    model.params = params;
    model.seed = seed;
    for (double v : y) model.init += v;
    model.init /= static_cast<double>(n);

    TreeParams tp;
    tp.maxDepth = params.maxDepth;
    tp.minSamplesLeaf = params.minSamplesLeaf;
    std::vector<double> stageSum(n, 0.0), residual(n);
    const std::size_t take = std::max<std::size_t>(1, static_cast<std::size_t>(params.subsample * static_cast<double>(n)));
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t m = 0; m < params.nStages; ++m) {
        const std::uint64_t stageSeed = mixSeed(seed, m);
        for (std::size_t i = 0; i < n; ++i) residual[i] = y[i] - (model.init + params.learningRate * stageSum[i]);
        std::vector<std::size_t> rows = all;
        if (take < n) {
            Rng rng(stageSeed);
            rng.shuffle(rows);
            rows.resize(take);
            std::sort(rows.begin(), rows.end());
        }
        model.trees.push_back(fitTree(X, residual, rows, tp, stageSeed));
        const auto& tree = model.trees.back();
        for (std::size_t i = 0; i < n; ++i) stageSum[i] += tree.predictRow(X.row(i));
    }
    return model;
}

}  // namespace credlens::models
