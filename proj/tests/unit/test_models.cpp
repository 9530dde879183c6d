#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "credlens/common/rng.hpp"
#include "credlens/models.hpp"

using namespace credlens;
using namespace credlens::models;
using nlohmann::json;

namespace {

DenseMatrix randomMatrix(Rng& rng, std::size_t n, std::size_t p) {
    DenseMatrix X(n, p);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) X(i, j) = rng.normal();
    return X;
}

std::vector<double> linearTarget(Rng& rng, const DenseMatrix& X, double noise) {
    std::vector<double> beta(X.cols());
    for (auto& b : beta) b = rng.uniform(-3.0, 3.0);
    std::vector<double> y(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) {
        y[i] = 0.5;
        for (std::size_t j = 0; j < X.cols(); ++j) y[i] += beta[j] * X(i, j);
        y[i] += noise * rng.normal();
    }
    return y;
}

/// Raw-scale normal equations [1 X]'[1 X] b = [1 X]'y by Gaussian elimination with partial pivoting.
std::vector<double> normalEquationOracle(const DenseMatrix& X, std::span<const double> y) {
    const std::size_t p = X.cols() + 1, n = X.rows();
    std::vector<std::vector<double>> A(p, std::vector<double>(p + 1, 0.0));
    auto at = [&](std::size_t i, std::size_t j) { return j == 0 ? 1.0 : X(i, j - 1); };
    for (std::size_t a = 0; a < p; ++a) {
        for (std::size_t b = 0; b < p; ++b)
            for (std::size_t i = 0; i < n; ++i) A[a][b] += at(i, a) * at(i, b);
        for (std::size_t i = 0; i < n; ++i) A[a][p] += at(i, a) * y[i];
    }
    for (std::size_t c = 0; c < p; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < p; ++r)
            if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
        std::swap(A[c], A[piv]);
        for (std::size_t r = 0; r < p; ++r) {
            if (r == c) continue;
            const double f = A[r][c] / A[c][c];
            for (std::size_t k = c; k <= p; ++k) A[r][k] -= f * A[c][k];
        }
    }
    std::vector<double> out(p);
    for (std::size_t c = 0; c < p; ++c) out[c] = A[c][p] / A[c][c];
    return out;  // intercept first
}

double trainingMse(const auto& model, const DenseMatrix& X, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t i = 0; i < X.rows(); ++i) {
        const double e = y[i] - model.predictRow(X.row(i));
        s += e * e;
    }
    return s / static_cast<double>(X.rows());
}

/// Brute-force CART: every column, every midpoint, SSE computed directly.
struct OracleTree {
    bool leaf = true;
    std::size_t feature = 0;
    double threshold = 0.0, value = 0.0;
    std::unique_ptr<OracleTree> left, right;

    double predict(std::span<const double> x) const {
        if (leaf) return value;
        return x[feature] <= threshold ? left->predict(x) : right->predict(x);
    }
};

double sse(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s;
}

std::unique_ptr<OracleTree> oracleTree(const DenseMatrix& X, std::span<const double> y, std::vector<std::size_t> rows,
                                       int depth) {
    auto node = std::make_unique<OracleTree>();
    std::vector<double> ys;
    for (auto r : rows) ys.push_back(y[r]);
    node->value = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
    if (depth == 0 || rows.size() < 2) return node;
    double bestSse = sse(ys);
    bool found = false;
    for (std::size_t f = 0; f < X.cols(); ++f) {
        std::vector<double> vals;
        for (auto r : rows) vals.push_back(X(r, f));
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
            const double t = (vals[k] + vals[k + 1]) / 2.0;
            std::vector<double> l, r;
            for (auto row : rows) (X(row, f) <= t ? l : r).push_back(y[row]);
            const double s = sse(l) + sse(r);
            if (!found || s < bestSse - 1e-12) {
                found = true;
                bestSse = s;
                node->feature = f;
                node->threshold = t;
            }
        }
    }
    if (!found) return node;
    std::vector<std::size_t> l, r;
    for (auto row : rows) (X(row, node->feature) <= node->threshold ? l : r).push_back(row);
    node->leaf = false;
    node->left = oracleTree(X, y, l, depth - 1);
    node->right = oracleTree(X, y, r, depth - 1);
    return node;
}

void checkCover(const RegressionTree& t) {
    for (const auto& n : t.nodes) {
        if (n.leaf()) continue;
        REQUIRE(n.left > 0);
        REQUIRE(n.right > 0);
        CHECK(n.cover == t.nodes[static_cast<std::size_t>(n.left)].cover + t.nodes[static_cast<std::size_t>(n.right)].cover);
    }
}

DenseMatrix column(std::initializer_list<double> v) {
    DenseMatrix X(v.size(), 1);
    std::size_t i = 0;
    for (double x : v) X(i++, 0) = x;
    return X;
}

}  // namespace

TEST_CASE("ols exact fit, constant target and the normal equation oracle") {
    const auto X = column({1, 2, 3, 4, 5});
    const std::vector<double> y{2, 4, 6, 8, 10};
    const auto m = fitOls(X, y);
    CHECK(std::abs(m.intercept) < 1e-9);
    CHECK(std::abs(m.coefficients[0] - 2.0) < 1e-9);

    const std::vector<double> flat(5, 5.0);
    const auto c = fitOls(X, flat);
    CHECK(c.intercept == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(std::abs(c.coefficients[0]) < 1e-12);

    Rng rng(11);
    for (int trial = 0; trial < 25; ++trial) {
        const auto Xr = randomMatrix(rng, 50, 3);
        const auto yr = linearTarget(rng, Xr, 0.7);
        const auto fit = fitOls(Xr, yr);
        const auto oracle = normalEquationOracle(Xr, yr);
        CHECK(std::abs(fit.intercept - oracle[0]) < 1e-8);
        for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(fit.coefficients[j] - oracle[j + 1]) < 1e-8);
        CHECK(fit.jitter == 0.0);
    }
}

TEST_CASE("ols edge cases") {
    DenseMatrix X(3, 3, 1.0);
    CHECK_THROWS_AS(fitOls(X, std::vector<double>{1, 2, 3}), ModelError);
    CHECK_THROWS_AS(fitOls(column({1, 2}), std::vector<double>{1, 2, 3}), ModelError);

    // Duplicate column: singular Gram, jitter recorded, fit still exact in sum.
    Rng rng(5);
    DenseMatrix D(30, 2);
    std::vector<double> y(30);
    for (std::size_t i = 0; i < 30; ++i) {
        D(i, 0) = D(i, 1) = rng.normal();
        y[i] = 3.0 * D(i, 0) + 1.0;
    }
    const auto m = fitOls(D, y);
    CHECK(m.jitter == 1e-10);
    CHECK(m.coefficients[0] + m.coefficients[1] == doctest::Approx(3.0).epsilon(1e-6));

    // Zero-variance column gets a zero coefficient.
    DenseMatrix Z(4, 2);
    for (std::size_t i = 0; i < 4; ++i) {
        Z(i, 0) = static_cast<double>(i);
        Z(i, 1) = 7.0;
    }
    const auto z = fitOls(Z, std::vector<double>{1, 3, 5, 7});
    CHECK(z.coefficients[1] == 0.0);
    CHECK(z.coefficients[0] == doctest::Approx(2.0));
    CHECK(z.sds[1] == 0.0);
}

TEST_CASE("lasso full shrinkage threshold") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const auto X = randomMatrix(rng, 40, 4);
        const auto y = linearTarget(rng, X, 1.0);
        const double top = lassoLambdaMax(X, y);
        // lambda_max from first principles: standardized columns, centered y.
        double manual = 0.0, ybar = std::accumulate(y.begin(), y.end(), 0.0) / 40.0;
        for (std::size_t j = 0; j < 4; ++j) {
            const auto c = X.column(j);
            const double m = std::accumulate(c.begin(), c.end(), 0.0) / 40.0;
            double ss = 0.0, dot = 0.0;
            for (double v : c) ss += (v - m) * (v - m);
            const double sd = std::sqrt(ss / 40.0);
            for (std::size_t i = 0; i < 40; ++i) dot += (c[i] - m) / sd * (y[i] - ybar);
            manual = std::max(manual, std::abs(dot) / 40.0);
        }
        CHECK(top == doctest::Approx(manual).epsilon(1e-12));
        for (double lambda : {top, top * 1.5}) {
            const auto m = fitLasso(X, y, lambda);
            for (double b : m.coefficients) CHECK(b == 0.0);
            CHECK(m.intercept == doctest::Approx(ybar).epsilon(1e-12));
        }
        const auto below = fitLasso(X, y, top * 0.9);
        CHECK(std::any_of(below.coefficients.begin(), below.coefficients.end(), [](double b) { return b != 0.0; }));
    }
}

TEST_CASE("lasso at lambda zero matches the ols oracle over 200 problems") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t p = 1 + rng.uniformBelow(5);
        const auto X = randomMatrix(rng, 60, p);
        const auto y = linearTarget(rng, X, 0.5);
        const auto m = fitLasso(X, y, 0.0);
        REQUIRE(m.converged);
        const auto oracle = normalEquationOracle(X, y);
        CHECK(std::abs(m.intercept - oracle[0]) < 1e-6);
        for (std::size_t j = 0; j < p; ++j) CHECK(std::abs(m.coefficients[j] - oracle[j + 1]) < 1e-6);
    }
}

TEST_CASE("lasso single standardized column closed form") {
    Rng rng(41);
    for (int trial = 0; trial < 50; ++trial) {
        const auto X = randomMatrix(rng, 30, 1);
        const auto y = linearTarget(rng, X, 1.0);
        const auto c = X.column(0);
        const double n = 30.0;
        const double m = std::accumulate(c.begin(), c.end(), 0.0) / n;
        double ss = 0.0;
        for (double v : c) ss += (v - m) * (v - m);
        const double sd = std::sqrt(ss / n);
        double rho = 0.0;
        const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / n;
        for (std::size_t i = 0; i < 30; ++i) rho += (c[i] - m) / sd * (y[i] - ybar);
        rho /= n;
        const double lambda = rng.uniform(0.0, 1.5 * std::abs(rho));
        const double betaStd = std::copysign(std::max(std::abs(rho) - lambda, 0.0), rho);
        const auto fit = fitLasso(X, y, lambda);
        CHECK(std::abs(fit.coefficients[0] * sd - betaStd) < 1e-9);
    }
}

TEST_CASE("lasso KKT conditions over 200 random problems") {
    Rng rng(51);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 30 + rng.uniformBelow(40), p = 2 + rng.uniformBelow(7);
        auto X = randomMatrix(rng, n, p);
        for (std::size_t i = 0; i < n; ++i) X(i, 1) = 0.6 * X(i, 0) + 0.4 * X(i, 1);  // correlated pair
        const auto y = linearTarget(rng, X, 1.0);
        const double lambda = lassoLambdaMax(X, y) * rng.uniform(0.01, 0.9);
        const auto m = fitLasso(X, y, lambda);
        REQUIRE(m.converged);
        std::vector<double> r(n);
        for (std::size_t i = 0; i < n; ++i) r[i] = y[i] - m.predictRow(X.row(i));
        for (std::size_t j = 0; j < p; ++j) {
            double g = 0.0;
            for (std::size_t i = 0; i < n; ++i) g += (X(i, j) - m.means[j]) / m.sds[j] * r[i];
            g /= static_cast<double>(n);
            if (m.coefficients[j] == 0.0) {
                CHECK(std::abs(g) <= lambda + 1e-6);
            } else {
                CHECK(std::abs(g - lambda * std::copysign(1.0, m.coefficients[j])) <= 1e-6);
            }
        }
    }
}

TEST_CASE("lasso reports non-convergence") {
    Rng rng(61);
    auto X = randomMatrix(rng, 40, 3);
    for (std::size_t i = 0; i < 40; ++i) X(i, 1) = X(i, 0) + 0.01 * X(i, 1);
    const auto y = linearTarget(rng, X, 0.1);
    const auto m = fitLasso(X, y, 1e-4, LassoOptions{1e-12, 2});
    CHECK_FALSE(m.converged);
    CHECK(m.iterations == 2);
    CHECK(m.coefficients.size() == 3);
    CHECK_THROWS_AS(fitLasso(X, y, -1.0), ModelError);
}

TEST_CASE("lasso path is log spaced from lambda max") {
    Rng rng(71);
    const auto X = randomMatrix(rng, 40, 3);
    const auto y = linearTarget(rng, X, 1.0);
    const auto path = lassoPath(X, y, 50, 4.0);
    REQUIRE(path.size() == 50);
    CHECK(path.front() == lassoLambdaMax(X, y));
    CHECK(path.back() == doctest::Approx(path.front() * 1e-4).epsilon(1e-12));
    for (std::size_t k = 1; k < path.size(); ++k) CHECK(path[k] / path[k - 1] == doctest::Approx(std::pow(10.0, -4.0 / 49)));
}

TEST_CASE("random forest interpolates with one unrestricted tree") {
    Rng rng(81);
    const auto X = randomMatrix(rng, 60, 3);
    std::vector<double> y(60);
    for (auto& v : y) v = rng.normal();
    ForestParams p;
    p.nTrees = 1;
    p.bootstrap = false;
    const auto f = fitRandomForest(X, y, p, 3);
    for (std::size_t i = 0; i < 60; ++i) CHECK(f.predictRow(X.row(i)) == y[i]);
    checkCover(f.trees[0]);
    CHECK(f.trees[0].nodes[0].cover == 60.0);
}

TEST_CASE("random forest constant target and mean of trees") {
    Rng rng(91);
    const auto X = randomMatrix(rng, 50, 4);
    const std::vector<double> flat(50, 3.25);
    ForestParams p;
    p.nTrees = 7;
    const auto c = fitRandomForest(X, flat, p, 1);
    for (std::size_t i = 0; i < 20; ++i) CHECK(c.predictRow(randomMatrix(rng, 1, 4).row(0)) == 3.25);

    std::vector<double> y(50);
    for (std::size_t i = 0; i < 50; ++i) y[i] = X(i, 0) * X(i, 1) + rng.normal();
    p.nTrees = 13;
    p.tree.maxFeatures.sqrt = true;
    const auto f = fitRandomForest(X, y, p, 2);
    for (const auto& t : f.trees) checkCover(t);
    const auto probe = randomMatrix(rng, 100, 4);
    for (std::size_t i = 0; i < 100; ++i) {
        double s = 0.0;
        for (const auto& t : f.trees) s += t.predictRow(probe.row(i));
        CHECK(std::abs(f.predictRow(probe.row(i)) - s / 13.0) < 1e-12);
    }
}

TEST_CASE("random forest is deterministic across thread counts") {
    Rng rng(101);
    const auto X = randomMatrix(rng, 80, 5);
    const auto y = linearTarget(rng, X, 1.0);
    const json hp{{"n_trees", 24}, {"max_depth", 6}, {"max_features", "sqrt"}};
    const auto one = modelToJson(fitModel(ModelKind::RandomForest, hp, X, y, 9, {}, 1)).dump();
    const auto four = modelToJson(fitModel(ModelKind::RandomForest, hp, X, y, 9, {}, 4)).dump();
    const auto again = modelToJson(fitModel(ModelKind::RandomForest, hp, X, y, 9, {}, 3)).dump();
    CHECK(one == four);
    CHECK(one == again);
    const auto other = modelToJson(fitModel(ModelKind::RandomForest, hp, X, y, 10, {}, 1)).dump();
    CHECK(one != other);
}

TEST_CASE("random forest training error is non-increasing in depth without bootstrap") {
    Rng rng(111);
    for (const json maxFeatures : {json(1.0), json("sqrt"), json(0.5)}) {
        for (int trial = 0; trial < 5; ++trial) {
            const auto X = randomMatrix(rng, 70, 5);
            std::vector<double> y(70);
            for (std::size_t i = 0; i < 70; ++i) y[i] = std::sin(X(i, 0)) + X(i, 1) * X(i, 2) + 0.3 * rng.normal();
            double previous = std::numeric_limits<double>::infinity();
            for (const json depth : {json(0), json(1), json(2), json(3), json(5), json(8), json(nullptr)}) {
                const json hp{{"n_trees", 5}, {"bootstrap", false}, {"max_depth", depth}, {"max_features", maxFeatures}};
                const auto m = fitModel(ModelKind::RandomForest, hp, X, y, 77);
                const double mse = trainingMse(m, X, y);
                CHECK(mse <= previous);
                previous = mse;
            }
        }
    }
}

TEST_CASE("random forest rejects invalid hyperparameters") {
    const auto X = column({1, 2, 3, 4});
    const std::vector<double> y{1, 2, 3, 4};
    CHECK_THROWS_AS(fitModel(ModelKind::RandomForest, {{"n_trees", 0}}, X, y, 1), ModelError);
    CHECK_THROWS_AS(fitModel(ModelKind::RandomForest, {{"min_samples_leaf", 0}}, X, y, 1), ModelError);
    CHECK_THROWS_AS(fitModel(ModelKind::RandomForest, {{"min_samples_split", 1}}, X, y, 1), ModelError);
    CHECK_THROWS_AS(fitModel(ModelKind::RandomForest, {{"max_features", 1.5}}, X, y, 1), ModelError);
    CHECK_THROWS_AS(fitModel(ModelKind::RandomForest, {{"max_features", "log2"}}, X, y, 1), ModelError);
    CHECK_THROWS_AS(fitModel(ModelKind::RandomForest, {{"min_samples_split", 5}}, X, y, 1), ModelError);
    CHECK_THROWS_AS(fitModel(ModelKind::RandomForest, {{"trees", 5}}, X, y, 1), ModelError);
    CHECK_THROWS_AS(fitModel(ModelKind::RandomForest, {{"n_trees", "many"}}, X, y, 1), ModelError);
}

TEST_CASE("min samples leaf is respected") {
    Rng rng(121);
    const auto X = randomMatrix(rng, 60, 3);
    const auto y = linearTarget(rng, X, 1.0);
    for (std::size_t leaf : {1u, 3u, 7u}) {
        TreeParams tp;
        tp.minSamplesLeaf = leaf;
        std::vector<std::size_t> rows(60);
        std::iota(rows.begin(), rows.end(), 0);
        const auto t = fitTree(X, y, rows, tp, 4);
        for (const auto& n : t.nodes)
            if (n.leaf()) CHECK(n.cover >= static_cast<double>(leaf));
    }
}

TEST_CASE("gbdt zero stages, exhaustive tree oracle and step recovery") {
    Rng rng(131);
    const auto X = randomMatrix(rng, 40, 3);
    const auto y = linearTarget(rng, X, 1.0);
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / 40.0;
    const auto zero = fitGbdt(X, y, BoostParams{0, 3, 0.1, 1.0, 1}, 1);
    for (std::size_t i = 0; i < 40; ++i) CHECK(zero.predictRow(X.row(i)) == mean);

    for (int depth : {1, 2, 3}) {
        const auto g = fitGbdt(X, y, BoostParams{1, depth, 1.0, 1.0, 1}, 5);
        std::vector<double> resid(40);
        for (std::size_t i = 0; i < 40; ++i) resid[i] = y[i] - mean;
        std::vector<std::size_t> rows(40);
        std::iota(rows.begin(), rows.end(), 0);
        const auto oracle = oracleTree(X, resid, rows, depth);
        const auto probe = randomMatrix(rng, 200, 3);
        for (std::size_t i = 0; i < 40; ++i) CHECK(g.predictRow(X.row(i)) == doctest::Approx(mean + oracle->predict(X.row(i))).epsilon(1e-12));
        for (std::size_t i = 0; i < 200; ++i)
            CHECK(g.predictRow(probe.row(i)) == doctest::Approx(mean + oracle->predict(probe.row(i))).epsilon(1e-12));
    }

    // Step at 0.35 on the second column.
    DenseMatrix S(30, 2);
    std::vector<double> step(30);
    for (std::size_t i = 0; i < 30; ++i) {
        S(i, 0) = rng.normal();
        S(i, 1) = static_cast<double>(i) / 29.0;
        step[i] = S(i, 1) <= 0.35 ? -2.0 : 4.0;
    }
    const auto g = fitGbdt(S, step, BoostParams{1, 1, 1.0, 1.0, 1}, 0);
    for (std::size_t i = 0; i < 30; ++i) CHECK(g.predictRow(S.row(i)) == doctest::Approx(step[i]).epsilon(1e-12));
    CHECK(g.trees[0].nodes[0].feature == 1);
}

TEST_CASE("gbdt training error is non-increasing in stages with full subsample") {
    Rng rng(141);
    for (int trial = 0; trial < 5; ++trial) {
        const auto X = randomMatrix(rng, 60, 4);
        std::vector<double> y(60);
        for (std::size_t i = 0; i < 60; ++i) y[i] = X(i, 0) * X(i, 1) + std::cos(X(i, 2)) + 0.2 * rng.normal();
        double previous = std::numeric_limits<double>::infinity();
        for (std::size_t stages : {0u, 1u, 2u, 5u, 10u, 20u, 40u}) {
            const auto g = fitGbdt(X, y, BoostParams{stages, 2, 0.3, 1.0, 1}, 3);
            const double mse = trainingMse(g, X, y);
            CHECK(mse <= previous);
            previous = mse;
        }
    }
}

TEST_CASE("gbdt subsample and validation") {
    Rng rng(151);
    const auto X = randomMatrix(rng, 50, 3);
    const auto y = linearTarget(rng, X, 1.0);
    const auto a = fitGbdt(X, y, BoostParams{10, 2, 0.1, 0.7, 1}, 8);
    const auto b = fitGbdt(X, y, BoostParams{10, 2, 0.1, 0.7, 1}, 8);
    CHECK(modelToJson(Model{ModelKind::Gbdt, json::object(), 8, {}, a}).dump() ==
          modelToJson(Model{ModelKind::Gbdt, json::object(), 8, {}, b}).dump());
    CHECK(a.trees[0].nodes[0].cover == 35.0);
    CHECK_THROWS_AS(fitGbdt(X, y, BoostParams{1, 2, 0.0, 1.0, 1}, 1), ModelError);
    CHECK_THROWS_AS(fitGbdt(X, y, BoostParams{1, 2, 1.5, 1.0, 1}, 1), ModelError);
    CHECK_THROWS_AS(fitGbdt(X, y, BoostParams{1, 2, 0.1, 0.0, 1}, 1), ModelError);
    CHECK_THROWS_AS(fitGbdt(X, y, BoostParams{1, 2, 0.1, 1.1, 1}, 1), ModelError);
}

TEST_CASE("predict examples") {
    LinearModel lin;
    lin.intercept = 1.0;
    lin.coefficients = {2.0, 0.0};
    Model m;
    m.kind = ModelKind::Ols;
    m.columnNames = {"a", "b"};
    m.fitted = lin;
    const std::vector<double> row{3.0, 9.0};
    CHECK(m.predictRow(row) == 7.0);
    CHECK_THROWS_AS(m.predictRow(std::vector<double>{3.0}), ModelError);
    CHECK_THROWS_AS(m.predict(DenseMatrix(2, 3)), ModelError);

    RegressionTree leaf;
    leaf.nodes.push_back(TreeNode{-1, 0.0, -1, -1, 2.5, 10.0});
    ForestModel f;
    f.trees.assign(4, leaf);
    CHECK(f.predictRow(row) == 2.5);

    BoostedModel g;
    g.init = 1.75;
    g.params.learningRate = 0.0;
    RegressionTree stump;
    stump.nodes = {TreeNode{0, 1.0, 1, 2, 0.0, 2.0}, TreeNode{-1, 0.0, -1, -1, -5.0, 1.0}, TreeNode{-1, 0.0, -1, -1, 5.0, 1.0}};
    g.trees.assign(3, stump);
    CHECK(g.predictRow(row) == 1.75);
    CHECK(g.predictRow(std::vector<double>{0.0, 0.0}) == 1.75);
}

TEST_CASE("model artifacts round trip bit exactly") {
    Rng rng(161);
    const auto X = randomMatrix(rng, 50, 3);
    const auto y = linearTarget(rng, X, 1.0);
    const std::vector<std::string> names{"x0", "x1", "x2"};
    const auto probe = randomMatrix(rng, 30, 3);
    const std::vector<std::pair<ModelKind, json>> cases{
        {ModelKind::Ols, json::object()},
        {ModelKind::Lasso, {{"lambda", 0.05}}},
        {ModelKind::RandomForest, {{"n_trees", 6}, {"max_depth", nullptr}, {"max_features", "sqrt"}}},
        {ModelKind::Gbdt, {{"n_stages", 12}, {"subsample", 0.7}, {"learning_rate", 0.05}}}};
    for (const auto& [kind, hp] : cases) {
        const auto m = fitModel(kind, hp, X, y, 0xFFFFFFFFFFFFFFF1ULL, names);
        const auto text = modelToJson(m).dump();
        const auto back = modelFromJson(json::parse(text));
        CHECK(modelToJson(back).dump() == text);
        CHECK(back.seed == 0xFFFFFFFFFFFFFFF1ULL);
        CHECK(back.columnNames == names);
        const auto a = m.predict(probe), b = back.predict(probe), c = m.predict(probe);
        CHECK(a == b);
        CHECK(a == c);
        const auto doc = json::parse(text);
        CHECK(doc.contains("kind"));
        CHECK(doc.contains("hyperparams"));
        CHECK(doc.contains("column_names"));
        CHECK((doc.contains("trees") || doc.contains("coefficients")));
    }
    const auto rf = fitModel(ModelKind::RandomForest, {{"n_trees", 1}}, X, y, 1);
    CHECK(rf.hyperparams == json{{"n_trees", 1},         {"max_depth", nullptr},   {"min_samples_split", 2},
                                 {"min_samples_leaf", 1}, {"max_features", 1.0},    {"bootstrap", true}});
    auto broken = modelToJson(rf);
    broken["trees"][0]["left"][0] = 0;
    CHECK_THROWS_AS(modelFromJson(broken), ModelError);
    broken = modelToJson(rf);
    broken["kind"] = "svm";
    CHECK_THROWS_AS(modelFromJson(broken), ModelError);
    broken = modelToJson(rf);
    broken.erase("trees");
    CHECK_THROWS_AS(modelFromJson(broken), ModelError);
}

TEST_CASE("grid expansion order and default grids") {
    const auto X = column({1, 2, 3, 4, 5});
    const std::vector<double> y{1, 3, 2, 5, 4};
    const auto g = expandGrid(ModelKind::Gbdt, {{"max_depth", {1, 2}}, {"n_stages", {10, 20, 30}}}, X, y);
    REQUIRE(g.size() == 6);
    CHECK(g[0] == json{{"n_stages", 10}, {"max_depth", 1}});
    CHECK(g[1] == json{{"n_stages", 10}, {"max_depth", 2}});
    CHECK(g[5] == json{{"n_stages", 30}, {"max_depth", 2}});
    CHECK(expandGrid(ModelKind::Ols, json::object(), X, y).size() == 1);
    CHECK(expandGrid(ModelKind::RandomForest, defaultGridSpec(ModelKind::RandomForest), X, y).size() == 216);
    CHECK(expandGrid(ModelKind::Gbdt, defaultGridSpec(ModelKind::Gbdt), X, y).size() == 108);
    const auto lasso = expandGrid(ModelKind::Lasso, defaultGridSpec(ModelKind::Lasso), X, y);
    REQUIRE(lasso.size() == 50);
    CHECK(lasso[0]["lambda"].get<double>() == lassoLambdaMax(X, y));
    CHECK_THROWS_AS(expandGrid(ModelKind::Gbdt, {{"depth", {1}}}, X, y), ModelError);
    CHECK_THROWS_AS(expandGrid(ModelKind::Gbdt, {{"max_depth", json::array()}}, X, y), ModelError);
    CHECK_THROWS_AS(expandGrid(ModelKind::Lasso, {{"lambda_path", {{"steps", 3}}}}, X, y), ModelError);
}

TEST_CASE("grid search selection, ties and refit") {
    Rng rng(171);
    auto make = [&](std::size_t n) {
        DenseMatrix X(n, 3);
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < 3; ++j) X(i, j) = rng.uniform01();
            y[i] = (X(i, 0) > 0.5 ? 2.0 : 0.0) + (X(i, 1) > 0.5 ? 1.0 : -1.0) * (X(i, 2) > 0.5 ? 1.5 : -1.5) +
                   0.05 * rng.normal();
        }
        return std::pair{X, y};
    };
    const auto [Xtr, ytr] = make(200);
    const auto [Xva, yva] = make(100);

    const std::vector<json> single{{{"n_trees", 3}}};
    const auto s = gridSearch(ModelKind::RandomForest, single, Xtr, ytr, Xva, yva, 4);
    CHECK(s.bestIndex == 0);
    CHECK(s.evaluated.size() == 1);

    const std::vector<json> depths{{{"n_trees", 10}, {"max_depth", 1}}, {{"n_trees", 10}, {"max_depth", 3}}};
    const auto d = gridSearch(ModelKind::RandomForest, depths, Xtr, ytr, Xva, yva, 4, {}, 2);
    CHECK(d.evaluated[1].second > d.evaluated[0].second);
    CHECK(d.bestIndex == 1);
    CHECK(d.best()["max_depth"] == 3);

    // Refit uses train + validation with the same seed.
    DenseMatrix all(300, 3);
    std::vector<double> yall(ytr);
    yall.insert(yall.end(), yva.begin(), yva.end());
    for (std::size_t i = 0; i < 300; ++i)
        for (std::size_t j = 0; j < 3; ++j) all(i, j) = i < 200 ? Xtr(i, j) : Xva(i - 200, j);
    const auto direct = fitModel(ModelKind::RandomForest, depths[1], all, yall, 4);
    CHECK(modelToJson(direct).dump() == modelToJson(d.model).dump());

    const double top = lassoLambdaMax(Xtr, ytr);
    const std::vector<json> tied{{{"lambda", top * 2}}, {{"lambda", top * 3}}, {{"lambda", 0.0}}};
    const auto t = gridSearch(ModelKind::Lasso, tied, Xtr, ytr, Xva, yva, 1);
    CHECK(t.evaluated[0].second == t.evaluated[1].second);
    const std::vector<json> tiedOnly{{{"lambda", top * 2}}, {{"lambda", top * 3}}};
    CHECK(gridSearch(ModelKind::Lasso, tiedOnly, Xtr, ytr, Xva, yva, 1).bestIndex == 0);

    CHECK_THROWS_AS(gridSearch(ModelKind::Ols, {}, Xtr, ytr, Xva, yva, 1), ModelError);
}

TEST_CASE("r squared") {
    const std::vector<double> y{1, 2, 3, 4};
    CHECK(rSquared(y, y) == 1.0);
    CHECK(rSquared(y, std::vector<double>(4, 2.5)) == 0.0);
    CHECK(rSquared(y, std::vector<double>{2, 1, 4, 3}) == doctest::Approx(1.0 - 4.0 / 5.0));
    CHECK_THROWS_AS(rSquared(std::vector<double>(3, 1.0), std::vector<double>(3, 1.0)), ModelError);
}
